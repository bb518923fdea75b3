#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "dsf/error.hpp"
#include "dsf/fft_conv.hpp"
#include "dsf/rng.hpp"

namespace {

using dsf::numerics::Complex;
using dsf::numerics::Tensor2;

Tensor2 direct_suffix_conv(const Tensor2& errors, const Tensor2& kernel) {
  const std::size_t T = errors.rows(), C = errors.cols(), w = kernel.cols();
  Tensor2 out(T, C);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t c = 0; c < C; ++c) {
      long double s = 0.0L;
      for (std::size_t k = 0; t + k < T; ++k) s += static_cast<long double>(kernel(k, c % w)) * errors(t + k, c);
      out(t, c) = static_cast<double>(s);
    }
  return out;
}

TEST(Fft, NextPow2) {
  EXPECT_EQ(dsf::numerics::next_pow2(1), 1u);
  EXPECT_EQ(dsf::numerics::next_pow2(5), 8u);
  EXPECT_EQ(dsf::numerics::next_pow2(64), 64u);
  EXPECT_EQ(dsf::numerics::next_pow2(65), 128u);
}

TEST(Fft, MatchesNaiveDft) {
  dsf::Rng rng(1);
  for (std::size_t n : {1u, 2u, 8u, 64u}) {
    std::vector<Complex> x(n);
    for (auto& v : x) v = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
    std::vector<Complex> y = x;
    dsf::numerics::fft_inplace(y);
    for (std::size_t k = 0; k < n; ++k) {
      Complex s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += x[j] * std::polar(1.0, -2.0 * std::numbers::pi * double(j * k) / double(n));
      EXPECT_LT(std::abs(s - y[k]), 1e-12);
    }
    dsf::numerics::fft_inplace(y, true);
    for (std::size_t k = 0; k < n; ++k) EXPECT_LT(std::abs(x[k] - y[k]), 1e-14);
  }
}

TEST(Fft, RejectsNonPowerOfTwo) {
  EXPECT_THROW(dsf::numerics::FftPlan(6), dsf::ShapeError);
  std::vector<Complex> x(3);
  EXPECT_THROW(dsf::numerics::fft_inplace(x), dsf::ShapeError);
}

TEST(SuffixConv, HalfKernelExample) {
  const Tensor2 kernel = Tensor2::from_rows({{1.0}, {0.5}, {0.25}});
  const Tensor2 errors = Tensor2::from_rows({{1.0}, {1.0}, {1.0}});
  const Tensor2 out = dsf::numerics::causal_conv_fft(errors, kernel);
  EXPECT_NEAR(out(0, 0), 1.75, 1e-15);
  EXPECT_NEAR(out(1, 0), 1.5, 1e-15);
  EXPECT_NEAR(out(2, 0), 1.0, 1e-15);
}

TEST(SuffixConv, MatchesDirectSum) {
  dsf::Rng rng(2);
  for (std::size_t T : {1u, 2u, 5u, 33u, 128u, 300u}) {
    const std::size_t w = 1 + rng.below(5);
    const std::size_t C = w * (1 + rng.below(3));
    Tensor2 kernel(T, w), errors(T, C);
    for (double& v : kernel.values()) v = rng.uniform(-1, 1);
    for (double& v : errors.values()) v = rng.uniform(-1, 1);
    dsf::numerics::SuffixConvolver conv(kernel);
    EXPECT_GE(conv.fft_length(), 2 * T - 1);
    const Tensor2 got = conv.apply(errors);
    EXPECT_LE(dsf::numerics::max_abs_diff(got, direct_suffix_conv(errors, kernel)), 1e-11) << T;
    Tensor2 again;
    conv.apply_into(errors, again);
    EXPECT_EQ(again, got);
  }
}

TEST(SuffixConv, ShapeErrors) {
  dsf::numerics::SuffixConvolver conv(Tensor2(4, 2));
  EXPECT_THROW(conv.apply(Tensor2(5, 2)), dsf::ShapeError);
  EXPECT_THROW(conv.apply(Tensor2(4, 3)), dsf::ShapeError);
  EXPECT_THROW(dsf::numerics::causal_conv_fft(Tensor2(3, 1), Tensor2(4, 1)), dsf::ShapeError);
}

}  // namespace

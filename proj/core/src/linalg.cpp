#include "dsf/linalg.hpp"

#define EIGEN_DONT_PARALLELIZE
#include <Eigen/Core>

#include "dsf/error.hpp"

namespace dsf::numerics {
namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor, Eigen::Unaligned, Eigen::OuterStride<>>;
using MutMap = Eigen::Map<RowMajor, Eigen::Unaligned, Eigen::OuterStride<>>;

ConstMap as_eigen(ConstMatView v) {
  return ConstMap(v.data, static_cast<Eigen::Index>(v.rows), static_cast<Eigen::Index>(v.cols),
                  Eigen::OuterStride<>(static_cast<Eigen::Index>(std::max<std::size_t>(v.stride, v.cols))));
}

MutMap as_eigen(MatView v) {
  return MutMap(v.data, static_cast<Eigen::Index>(v.rows), static_cast<Eigen::Index>(v.cols),
                Eigen::OuterStride<>(static_cast<Eigen::Index>(std::max<std::size_t>(v.stride, v.cols))));
}

std::string dims(ConstMatView v, Trans t) {
  std::string s = std::to_string(v.rows) + "x" + std::to_string(v.cols);
  return t == Trans::Yes ? s + "^T" : s;
}

}  // namespace

void gemm_into(ConstMatView a, Trans ta, ConstMatView b, Trans tb, MatView c, double alpha, double beta) {
  const std::size_t m = ta == Trans::Yes ? a.cols : a.rows;
  const std::size_t ka = ta == Trans::Yes ? a.rows : a.cols;
  const std::size_t kb = tb == Trans::Yes ? b.cols : b.rows;
  const std::size_t n = tb == Trans::Yes ? b.rows : b.cols;
  if (ka != kb || c.rows != m || c.cols != n) {
    throw ShapeError("gemm: cannot multiply " + dims(a, ta) + " by " + dims(b, tb) + " into " +
                     std::to_string(c.rows) + "x" + std::to_string(c.cols));
  }
  if (m == 0 || n == 0) return;
  auto C = as_eigen(c);
  if (ka == 0) {
    if (beta == 0.0) C.setZero(); else C *= beta;
    return;
  }
  auto A = as_eigen(a);
  auto B = as_eigen(b);
  if (beta == 0.0) {
    C.setZero();
  } else if (beta != 1.0) {
    C *= beta;
  }
  if (ta == Trans::No && tb == Trans::No) {
    C.noalias() += alpha * A * B;
  } else if (ta == Trans::Yes && tb == Trans::No) {
    C.noalias() += alpha * A.transpose() * B;
  } else if (ta == Trans::No && tb == Trans::Yes) {
    C.noalias() += alpha * A * B.transpose();
  } else {
    C.noalias() += alpha * A.transpose() * B.transpose();
  }
}

Tensor2 gemm(const Tensor2& a, const Tensor2& b, bool transpose_a, bool transpose_b) {
  const Trans ta = transpose_a ? Trans::Yes : Trans::No;
  const Trans tb = transpose_b ? Trans::Yes : Trans::No;
  const std::size_t m = transpose_a ? a.cols() : a.rows();
  const std::size_t n = transpose_b ? b.rows() : b.cols();
  Tensor2 c(m, n);
  gemm_into(a, ta, b, tb, c);
  return c;
}

}  // namespace dsf::numerics

namespace dsf::numerics {

namespace {

constexpr std::size_t kChunk = 256;
using Chunk = Eigen::Array<double, kChunk, 1>;

// Runs fn over aligned, zero-padded copies of fixed-size chunks, so every
// element takes the same vectorized path whatever its address or position.
template <typename Fn>
void chunked(std::span<double> v, Fn&& fn) {
  alignas(64) Chunk buf;
  for (std::size_t i = 0; i < v.size(); i += kChunk) {
    const std::size_t n = std::min(kChunk, v.size() - i);
    if (n < kChunk) buf.setZero();
    std::copy_n(v.data() + i, n, buf.data());
    fn(buf);
    std::copy_n(buf.data(), n, v.data() + i);
  }
}

}  // namespace

void sigmoid_inplace(std::span<double> v) {
  chunked(v, [](Chunk& a) { a = 1.0 / (1.0 + (-a).exp()); });
}

// exp form for |x| >= 0.1, odd Taylor series below (avoids cancellation).
void tanh_inplace(std::span<double> v) {
  chunked(v, [](Chunk& a) {
    const Chunk ax = a.abs();
    const Chunk big = 1.0 - 2.0 / ((2.0 * ax).exp() + 1.0);
    const Chunk x2 = ax * ax;
    const Chunk small =
        ax * (1.0 + x2 * (-1.0 / 3 + x2 * (2.0 / 15 + x2 * (-17.0 / 315 + x2 * (62.0 / 2835 +
                                    x2 * (-1382.0 / 155925 + x2 * (21844.0 / 6081075)))))));
    const Chunk t = (ax < 0.1).select(small, big);
    a = (a < 0.0).select(-t, t);
  });
}

}  // namespace dsf::numerics

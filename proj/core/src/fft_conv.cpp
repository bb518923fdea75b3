#include "dsf/fft_conv.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dsf/error.hpp"

namespace dsf::numerics {

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

FftPlan::FftPlan(std::size_t n) : n_(n) {
  if (n == 0 || (n & (n - 1)) != 0) throw ShapeError("FftPlan: length must be a power of two");
  // Twiddles evaluated directly per index; no accumulated rotation error.
  twiddle_.resize(n / 2);
  for (std::size_t k = 0; k < n / 2; ++k) {
    const double angle = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    twiddle_[k] = {std::cos(angle), std::sin(angle)};
  }
  bitrev_.resize(n);
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    bitrev_[i] = j;
  }
}

void FftPlan::transform(std::span<Complex> data, bool inverse) const {
  if (data.size() != n_) throw ShapeError("FftPlan: buffer length does not match plan");
  if (n_ == 1) return;
  for (std::size_t i = 1; i < n_; ++i) {
    if (i < bitrev_[i]) std::swap(data[i], data[bitrev_[i]]);
  }
  for (std::size_t len = 2; len <= n_; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t step = n_ / len;
    for (std::size_t start = 0; start < n_; start += len) {
      for (std::size_t k = 0; k < half; ++k) {
        const Complex w = inverse ? std::conj(twiddle_[k * step]) : twiddle_[k * step];
        const Complex u = data[start + k];
        const Complex v = data[start + k + half] * w;
        data[start + k] = u + v;
        data[start + k + half] = u - v;
      }
    }
  }
  if (inverse) {
    const double scale = 1.0 / static_cast<double>(n_);
    for (auto& z : data) z *= scale;
  }
}

void fft_inplace(std::span<Complex> data, bool inverse) { FftPlan(data.size()).transform(data, inverse); }

SuffixConvolver::SuffixConvolver(const Tensor2& kernel)
    : steps_(kernel.rows()), width_(kernel.cols()), fft_len_(next_pow2(2 * std::max<std::size_t>(kernel.rows(), 1) - 1)),
      plan_(fft_len_) {
  if (steps_ == 0 || width_ == 0) throw ShapeError("SuffixConvolver: empty kernel");
  spectra_.resize(width_);
  for (std::size_t j = 0; j < width_; ++j) {
    auto& spec = spectra_[j];
    spec.assign(fft_len_, Complex{});
    for (std::size_t k = 0; k < steps_; ++k) spec[k] = kernel(k, j);
    plan_.transform(spec);
  }
}

Tensor2 SuffixConvolver::apply(const Tensor2& errors) const {
  Tensor2 out(errors.rows(), errors.cols());
  apply_into(errors, out);
  return out;
}

void SuffixConvolver::apply_into(const Tensor2& errors, Tensor2& out) const {
  if (errors.rows() != steps_) {
    throw ShapeError("causal_conv_fft: errors have " + std::to_string(errors.rows()) +
                     " steps, kernel has " + std::to_string(steps_));
  }
  if (errors.cols() % width_ != 0) {
    throw ShapeError("causal_conv_fft: " + std::to_string(errors.cols()) +
                     " channels is not a multiple of kernel width " + std::to_string(width_));
  }
  if (!out.same_shape(errors)) out = Tensor2(errors.rows(), errors.cols());

  // Reversing time turns the suffix sum into an ordinary causal convolution:
  // with r[s] = errors[T-1-s], out[T-1-s] = sum_k kernel[k] r[s-k].
  std::vector<Complex> buf(fft_len_);
  const std::size_t channels = errors.cols();
  for (std::size_t c = 0; c < channels; ++c) {
    std::fill(buf.begin(), buf.end(), Complex{});
    for (std::size_t s = 0; s < steps_; ++s) buf[s] = errors(steps_ - 1 - s, c);
    plan_.transform(buf);
    const auto& spec = spectra_[c % width_];
    for (std::size_t i = 0; i < fft_len_; ++i) buf[i] *= spec[i];
    plan_.transform(buf, /*inverse=*/true);
    for (std::size_t s = 0; s < steps_; ++s) out(steps_ - 1 - s, c) = buf[s].real();
  }
}

Tensor2 causal_conv_fft(const Tensor2& errors, const Tensor2& kernel) {
  if (errors.rows() != kernel.rows()) {
    throw ShapeError("causal_conv_fft: length mismatch, errors " + errors.shape_string() + " vs kernel " +
                     kernel.shape_string());
  }
  return SuffixConvolver(kernel).apply(errors);
}

}  // namespace dsf::numerics

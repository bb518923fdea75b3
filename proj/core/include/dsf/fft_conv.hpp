#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "dsf/tensor.hpp"

namespace dsf::numerics {

using Complex = std::complex<double>;

// Smallest power of two >= n (n >= 1).
std::size_t next_pow2(std::size_t n);

// Iterative radix-2 FFT of a fixed power-of-two length with precomputed
// twiddles. The inverse transform includes the 1/N normalisation.
class FftPlan {
 public:
  explicit FftPlan(std::size_t n);
  std::size_t size() const { return n_; }
  void transform(std::span<Complex> data, bool inverse = false) const;

 private:
  std::size_t n_;
  std::vector<Complex> twiddle_;  // exp(-2 pi i k / n), k < n/2
  std::vector<std::size_t> bitrev_;
};

void fft_inplace(std::span<Complex> data, bool inverse = false);

// Per-channel suffix-aligned convolution
//   out[t][c] = sum_{k=0}^{T-1-t} kernel[k][c mod w] * errors[t+k][c]
// evaluated with zero-padded FFTs. Kernel spectra are computed once at
// construction, so one instance serves every call with the same length.
class SuffixConvolver {
 public:
  explicit SuffixConvolver(const Tensor2& kernel);

  std::size_t steps() const { return steps_; }
  std::size_t kernel_width() const { return width_; }
  std::size_t fft_length() const { return fft_len_; }

  // errors: steps() x C with C a multiple of kernel_width().
  Tensor2 apply(const Tensor2& errors) const;
  void apply_into(const Tensor2& errors, Tensor2& out) const;

 private:
  std::size_t steps_;
  std::size_t width_;
  std::size_t fft_len_;
  FftPlan plan_;
  std::vector<std::vector<Complex>> spectra_;  // one per kernel channel
};

// One-shot form. Throws ShapeError on length or width mismatch.
Tensor2 causal_conv_fft(const Tensor2& errors, const Tensor2& kernel);

}  // namespace dsf::numerics

#pragma once

#include <span>

#include "dsf/tensor.hpp"

namespace dsf::numerics {

enum class Trans { No, Yes };

// C = alpha * op(A) * op(B) + beta * C on views. Single-threaded with a fixed
// summation order, so identical inputs give bit-identical outputs.
// Throws ShapeError naming both operand shapes when dimensions disagree.
void gemm_into(ConstMatView a, Trans ta, ConstMatView b, Trans tb, MatView c,
               double alpha = 1.0, double beta = 0.0);

Tensor2 gemm(const Tensor2& a, const Tensor2& b, bool transpose_a = false, bool transpose_b = false);

}  // namespace dsf::numerics

namespace dsf::numerics {

// Vectorized elementwise activations, accurate to a few ulp.
void sigmoid_inplace(std::span<double> v);
void tanh_inplace(std::span<double> v);

}  // namespace dsf::numerics

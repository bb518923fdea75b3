#pragma once

#include <span>
#include <vector>

#include "dsf/tensor.hpp"

namespace dsf::numerics {

// One step of the first-order recurrence out[k] = add[k] + mult[k] * out[k-1].
struct ScanElem {
  std::vector<double> mult;
  std::vector<double> add;
};

// Associative composition: applying `first` then `second` equals applying
// (first.mult * second.mult, second.add + second.mult * first.add).
ScanElem combine(const ScanElem& first, const ScanElem& second);

// Inclusive scan in the given (forward) order. Runs ceil(log2 T) combine
// rounds; `threads` > 1 splits each round across workers without changing
// the result. Throws ShapeError on empty input or mixed dimensions.
std::vector<std::vector<double>> linear_recurrence_scan(std::span<const ScanElem> elems,
                                                        unsigned threads = 1);

// Same recurrence on packed sequences: row k of `mult`/`add` is step k, each
// column an independent channel. `mult` may also be a single row that is
// shared by every step.
Tensor2 linear_recurrence_scan(const Tensor2& mult, const Tensor2& add, unsigned threads = 1);

// Plain sequential evaluation of the same recurrence.
Tensor2 linear_recurrence_sequential(const Tensor2& mult, const Tensor2& add);

}  // namespace dsf::numerics

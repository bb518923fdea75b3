#include "dsf/scan.hpp"

#include <algorithm>
#include <thread>

#include "dsf/error.hpp"

namespace dsf::numerics {
namespace {

template <typename Fn>
void parallel_range(std::size_t begin, std::size_t end, unsigned threads, Fn&& fn) {
  const std::size_t n = end > begin ? end - begin : 0;
  if (threads <= 1 || n < 2 * static_cast<std::size_t>(threads)) {
    fn(begin, end);
    return;
  }
  std::vector<std::jthread> workers;
  const std::size_t chunk = (n + threads - 1) / threads;
  for (std::size_t lo = begin; lo < end; lo += chunk) {
    const std::size_t hi = std::min(end, lo + chunk);
    workers.emplace_back([&fn, lo, hi] { fn(lo, hi); });
  }
}

void check_shapes(const Tensor2& mult, const Tensor2& add) {
  if (add.rows() == 0 || add.cols() == 0) throw ShapeError("linear_recurrence_scan: empty input");
  if (mult.cols() != add.cols() || (mult.rows() != add.rows() && mult.rows() != 1)) {
    throw ShapeError("linear_recurrence_scan: mult " + mult.shape_string() + " does not match add " +
                     add.shape_string());
  }
}

}  // namespace

ScanElem combine(const ScanElem& first, const ScanElem& second) {
  if (first.mult.size() != second.mult.size() || first.add.size() != second.add.size() ||
      first.mult.size() != first.add.size()) {
    throw ShapeError("combine: dimension mismatch");
  }
  ScanElem out;
  out.mult.resize(first.mult.size());
  out.add.resize(first.add.size());
  for (std::size_t j = 0; j < out.mult.size(); ++j) {
    out.mult[j] = first.mult[j] * second.mult[j];
    out.add[j] = second.add[j] + second.mult[j] * first.add[j];
  }
  return out;
}

Tensor2 linear_recurrence_scan(const Tensor2& mult, const Tensor2& add, unsigned threads) {
  check_shapes(mult, add);
  const std::size_t steps = add.rows();
  const std::size_t width = add.cols();

  // Hillis-Steele: after the round with offset s, element k holds the
  // composition of steps max(0, k-2s+1)..k.
  Tensor2 m_cur(steps, width);
  if (mult.rows() == 1) {
    for (std::size_t k = 0; k < steps; ++k) std::copy_n(mult.data(), width, m_cur.row(k).data());
  } else {
    m_cur = mult;
  }
  Tensor2 a_cur = add;
  Tensor2 m_next(steps, width);
  Tensor2 a_next(steps, width);

  for (std::size_t offset = 1; offset < steps; offset *= 2) {
    parallel_range(0, steps, threads, [&](std::size_t lo, std::size_t hi) {
      for (std::size_t k = lo; k < hi; ++k) {
        const double* mk = m_cur.row(k).data();
        const double* ak = a_cur.row(k).data();
        double* mo = m_next.row(k).data();
        double* ao = a_next.row(k).data();
        if (k < offset) {
          std::copy_n(mk, width, mo);
          std::copy_n(ak, width, ao);
          continue;
        }
        const double* mp = m_cur.row(k - offset).data();
        const double* ap = a_cur.row(k - offset).data();
        for (std::size_t j = 0; j < width; ++j) {
          mo[j] = mp[j] * mk[j];
          ao[j] = ak[j] + mk[j] * ap[j];
        }
      }
    });
    std::swap(m_cur, m_next);
    std::swap(a_cur, a_next);
  }
  return a_cur;
}

std::vector<std::vector<double>> linear_recurrence_scan(std::span<const ScanElem> elems, unsigned threads) {
  if (elems.empty()) throw ShapeError("linear_recurrence_scan: empty input");
  const std::size_t width = elems.front().add.size();
  Tensor2 mult(elems.size(), width);
  Tensor2 add(elems.size(), width);
  for (std::size_t k = 0; k < elems.size(); ++k) {
    if (elems[k].mult.size() != width || elems[k].add.size() != width) {
      throw ShapeError("linear_recurrence_scan: element " + std::to_string(k) + " has dimension " +
                       std::to_string(elems[k].add.size()) + ", expected " + std::to_string(width));
    }
    std::copy(elems[k].mult.begin(), elems[k].mult.end(), mult.row(k).begin());
    std::copy(elems[k].add.begin(), elems[k].add.end(), add.row(k).begin());
  }
  const Tensor2 out = linear_recurrence_scan(mult, add, threads);
  std::vector<std::vector<double>> result(elems.size());
  for (std::size_t k = 0; k < elems.size(); ++k) {
    result[k].assign(out.row(k).begin(), out.row(k).end());
  }
  return result;
}

Tensor2 linear_recurrence_sequential(const Tensor2& mult, const Tensor2& add) {
  check_shapes(mult, add);
  Tensor2 out = add;
  for (std::size_t k = 1; k < out.rows(); ++k) {
    const double* m = mult.rows() == 1 ? mult.data() : mult.row(k).data();
    const double* prev = out.row(k - 1).data();
    double* cur = out.row(k).data();
    for (std::size_t j = 0; j < out.cols(); ++j) cur[j] += m[j] * prev[j];
  }
  return out;
}

}  // namespace dsf::numerics

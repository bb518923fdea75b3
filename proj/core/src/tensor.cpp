#include "dsf/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "dsf/error.hpp"

namespace dsf::numerics {

Tensor2::Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(data.begin(), data.end()) {
  if (data_.size() != rows_ * cols_) {
    throw ShapeError("Tensor2: buffer of " + std::to_string(data_.size()) +
                     " values does not match shape " + shape_string());
  }
}

Tensor2 Tensor2::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t nr = rows.size();
  const std::size_t nc = nr == 0 ? 0 : rows.begin()->size();
  std::vector<double> buf;
  buf.reserve(nr * nc);
  for (const auto& r : rows) {
    if (r.size() != nc) throw ShapeError("Tensor2::from_rows: ragged rows");
    buf.insert(buf.end(), r.begin(), r.end());
  }
  return Tensor2(nr, nc, std::move(buf));
}

Tensor2 Tensor2::row_vector(std::span<const double> values) {
  return Tensor2(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

Tensor2 Tensor2::reshaped(std::size_t rows, std::size_t cols) && {
  reshape(rows, cols);
  return std::move(*this);
}

void Tensor2::reshape(std::size_t rows, std::size_t cols) {
  if (rows * cols != data_.size()) {
    throw ShapeError("Tensor2::reshape: cannot view " + shape_string() + " as " +
                     std::to_string(rows) + "x" + std::to_string(cols));
  }
  rows_ = rows;
  cols_ = cols;
}

void Tensor2::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor2::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor2::validate(const std::string& what) const {
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) {
      std::ostringstream msg;
      msg << what << ": non-finite value " << data_[i] << " at (" << i / std::max<std::size_t>(cols_, 1)
          << ", " << i % std::max<std::size_t>(cols_, 1) << ") of " << shape_string();
      throw NumericError(msg.str());
    }
  }
}

std::string Tensor2::shape_string() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

Tensor2 copy_of(ConstMatView v) {
  Tensor2 out(v.rows, v.cols);
  copy_into(v, out);
  return out;
}

void copy_into(ConstMatView src, MatView dst) {
  if (src.rows != dst.rows || src.cols != dst.cols) throw ShapeError("copy_into: shape mismatch");
  for (std::size_t r = 0; r < src.rows; ++r) std::copy_n(src.row(r), src.cols, dst.row(r));
}

void add_inplace(Tensor2& acc, const Tensor2& x) {
  if (!acc.same_shape(x)) {
    throw ShapeError("add_inplace: " + acc.shape_string() + " vs " + x.shape_string());
  }
  double* a = acc.data();
  const double* b = x.data();
  for (std::size_t i = 0; i < acc.size(); ++i) a[i] += b[i];
}

void add_inplace(MatView acc, ConstMatView x) {
  if (acc.rows != x.rows || acc.cols != x.cols) throw ShapeError("add_inplace: shape mismatch");
  for (std::size_t r = 0; r < acc.rows; ++r) {
    double* a = acc.row(r);
    const double* b = x.row(r);
    for (std::size_t c = 0; c < acc.cols; ++c) a[c] += b[c];
  }
}

void scale_inplace(Tensor2& t, double s) {
  for (double& v : t.values()) v *= s;
}

double max_abs(const Tensor2& t) {
  double m = 0.0;
  for (double v : t.values()) m = std::max(m, std::abs(v));
  return m;
}

double max_abs_diff(const Tensor2& a, const Tensor2& b) {
  if (!a.same_shape(b)) {
    throw ShapeError("max_abs_diff: " + a.shape_string() + " vs " + b.shape_string());
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

void accumulate_col_sums(ConstMatView x, std::span<double> acc) {
  if (acc.size() != x.cols) throw ShapeError("accumulate_col_sums: width mismatch");
  for (std::size_t r = 0; r < x.rows; ++r) {
    const double* xr = x.row(r);
    for (std::size_t c = 0; c < x.cols; ++c) acc[c] += xr[c];
  }
}

}  // namespace dsf::numerics

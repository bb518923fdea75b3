#pragma once

#include <cstddef>
#include <initializer_list>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace dsf::numerics {

// Non-owning strided view of a row-major matrix block.
template <typename T>
struct BasicMatView {
  T* data = nullptr;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t stride = 0;  // distance between consecutive rows

  T* row(std::size_t r) const { return data + r * stride; }
  T& operator()(std::size_t r, std::size_t c) const { return data[r * stride + c]; }

  BasicMatView block(std::size_t r0, std::size_t nr, std::size_t c0, std::size_t nc) const {
    return {data + r0 * stride + c0, nr, nc, stride};
  }
  BasicMatView col_range(std::size_t c0, std::size_t nc) const { return block(0, rows, c0, nc); }
  BasicMatView row_range(std::size_t r0, std::size_t nr) const { return block(r0, nr, 0, cols); }

  operator BasicMatView<const T>() const { return {data, rows, cols, stride}; }
};

using MatView = BasicMatView<double>;
using ConstMatView = BasicMatView<const double>;

// 64-byte aligned storage: vectorized kernels then see the same alignment
// for the same shape, whatever the heap layout, and stay bit-reproducible.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlign); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

using AlignedBuffer = std::vector<double, AlignedAllocator<double>>;

// Dense row-major matrix of doubles. Vectors are 1 x n (or n x 1) matrices.
class Tensor2 {
 public:
  Tensor2() = default;
  Tensor2(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Tensor2 from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor2 row_vector(std::span<const double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  MatView view() { return {data_.data(), rows_, cols_, cols_}; }
  ConstMatView view() const { return {data_.data(), rows_, cols_, cols_}; }
  operator MatView() { return view(); }
  operator ConstMatView() const { return view(); }

  // Same buffer, new shape; rows * cols must be preserved.
  Tensor2 reshaped(std::size_t rows, std::size_t cols) &&;
  void reshape(std::size_t rows, std::size_t cols);

  void fill(double v);
  bool same_shape(const Tensor2& other) const { return rows_ == other.rows_ && cols_ == other.cols_; }

  // Throws NumericError naming `what` on the first non-finite entry.
  void validate(const std::string& what = "tensor") const;
  bool all_finite() const;

  std::string shape_string() const;

  friend bool operator==(const Tensor2&, const Tensor2&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  AlignedBuffer data_;
};

Tensor2 copy_of(ConstMatView v);
void copy_into(ConstMatView src, MatView dst);

// Elementwise helpers on equally shaped tensors.
void add_inplace(Tensor2& acc, const Tensor2& x);
void add_inplace(MatView acc, ConstMatView x);
void scale_inplace(Tensor2& t, double s);
double max_abs(const Tensor2& t);
double max_abs_diff(const Tensor2& a, const Tensor2& b);

// Adds the column sums of `x` into the 1 x cols row `acc`.
void accumulate_col_sums(ConstMatView x, std::span<double> acc);

}  // namespace dsf::numerics

#pragma once

#include <cstddef>
#include <initializer_list>
#include <new>
#include <span>
#include <string_view>
#include <vector>

namespace adi::num {

/// Fixed 64-byte alignment keeps vectorised reductions independent of where the heap places a buffer.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  // Value-initialisation (zeroing) only when a value is given.
  template <class U>
  void construct(U* p) noexcept {
    ::new (static_cast<void*>(p)) U;
  }
  template <class U, class... Args>
  void construct(U* p, Args&&... args) {
    ::new (static_cast<void*>(p)) U(static_cast<Args&&>(args)...);
  }

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlign); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

/// Dense row-major matrix of doubles. A value type: copies are deep.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  /// Entries are indeterminate; the caller must overwrite every one.
  static Matrix uninitialized(std::size_t rows, std::size_t cols);
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix column(std::span<const double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) & { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const& { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) && = delete;

  std::span<double> data() & { return data_; }
  std::span<const double> data() const& { return data_; }
  // Views into a temporary would dangle.
  std::span<const double> data() && = delete;

  bool operator==(const Matrix& other) const = default;

  /// True when every entry is finite.
  bool all_finite() const;

  void fill(double value);

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double, AlignedAllocator<double>> data_;
};

/// Throws NumericError naming `op` if `m` contains a NaN or Inf.
void require_finite(const Matrix& m, std::string_view op);

/// Throws ShapeError with `what` unless the shapes match exactly.
void require_same_shape(const Matrix& a, const Matrix& b, std::string_view what);

Matrix transpose(const Matrix& m);
Matrix matmul(const Matrix& a, const Matrix& b);

/// Row-wise softmax, numerically stabilised by the row max.
Matrix softmax_rows(const Matrix& m);

/// Width-3 temporal convolution along rows with zero padding of 1.
///
/// `kernel` stacks the three taps vertically: rows [k*C, (k+1)*C) hold the
/// C x C weights applied to input row n+k-1 when producing output row n.
Matrix conv1d_rows(const Matrix& m, const Matrix& kernel);

}  // namespace adi::num

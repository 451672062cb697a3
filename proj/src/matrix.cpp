#include "adi/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "adi/errors.hpp"
#include "eigen_bridge.hpp"

namespace adi::num {

using detail::view;

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols) {
  std::fill(data_.begin(), data_.end(), fill);
}

Matrix Matrix::uninitialized(std::size_t rows, std::size_t cols) {
  Matrix out;
  out.rows_ = rows;
  out.cols_ = cols;
  out.data_.resize(rows * cols);
  return out;
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(data.begin(), data.end()) {
  if (data_.size() != rows * cols) {
    throw ShapeError("Matrix: data length " + std::to_string(data_.size()) + " does not match " +
                     std::to_string(rows) + "x" + std::to_string(cols));
  }
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  Matrix out(r, c);
  std::size_t i = 0;
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("Matrix::from_rows: ragged rows");
    for (double v : row) out.data_[i++] = v;
  }
  return out;
}

Matrix Matrix::column(std::span<const double> values) {
  return Matrix(values.size(), 1, std::vector<double>(values.begin(), values.end()));
}

// x * 0 is NaN exactly for NaN and +-inf, and NaN survives the sum.
bool Matrix::all_finite() const {
  if (data_.empty()) return true;
  return std::isfinite((view(*this).array() * 0.0).sum());
}

void Matrix::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

void require_finite(const Matrix& m, std::string_view op) {
  if (!m.all_finite()) throw NumericError("non-finite value produced by " + std::string(op));
}

void require_same_shape(const Matrix& a, const Matrix& b, std::string_view what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(what) + ": shape " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                     " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
}

Matrix transpose(const Matrix& m) {
  Matrix out = Matrix::uninitialized(m.cols(), m.rows());
  view(out) = view(m).transpose();
  return out;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions " + std::to_string(a.cols()) + " and " + std::to_string(b.rows()));
  }
  Matrix out = Matrix::uninitialized(a.rows(), b.cols());
  view(out).noalias() = view(a) * view(b);
  return out;
}

Matrix softmax_rows(const Matrix& m) {
  require_finite(m, "softmax_rows input");
  Matrix out(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto in = m.row(r);
    auto o = out.row(r);
    const double mx = *std::max_element(in.begin(), in.end());
    double sum = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) {
      o[c] = std::exp(in[c] - mx);
      sum += o[c];
    }
    for (double& v : o) v /= sum;
  }
  return out;
}

Matrix conv1d_rows(const Matrix& m, const Matrix& kernel) {
  const std::size_t c = m.cols();
  if (kernel.rows() != 3 * c || kernel.cols() != c) {
    throw ShapeError("conv1d_rows: kernel must be " + std::to_string(3 * c) + "x" + std::to_string(c) + ", got " +
                     std::to_string(kernel.rows()) + "x" + std::to_string(kernel.cols()));
  }
  const std::size_t n = m.rows();
  Matrix out(n, c);
  auto x = view(m);
  auto k = view(kernel);
  auto y = view(out);
  const auto cc = static_cast<Eigen::Index>(c);
  const auto nn = static_cast<Eigen::Index>(n);
  y.noalias() = x * k.middleRows(cc, cc);
  if (n > 1) {
    y.bottomRows(nn - 1).noalias() += x.topRows(nn - 1) * k.topRows(cc);
    y.topRows(nn - 1).noalias() += x.bottomRows(nn - 1) * k.bottomRows(cc);
  }
  return out;
}

}  // namespace adi::num

#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "anyshot/errors.hpp"

namespace anyshot {

using Vector = std::vector<double>;

// Dense row-major matrix. Small, value-semantic; all the linear algebra in
// this project is desk-scale so no BLAS backing is needed.
class Matrix {
 public:
  Matrix() : rows_(0), cols_(0) {}
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  Vector column(std::size_t c) const {
    Vector out(rows_);
    for (std::size_t r = 0; r < rows_; ++r) out[r] = at(r, c);
    return out;
  }

  void set_column(std::size_t c, const Vector& v) {
    if (v.size() != rows_) throw DimensionError("set_column: length mismatch");
    for (std::size_t r = 0; r < rows_; ++r) at(r, c) = v[r];
  }

  bool all_finite() const {
    for (double x : data_)
      if (!std::isfinite(x)) return false;
    return true;
  }

  bool operator==(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_ && data_ == other.data_;
  }

 private:
  std::size_t rows_, cols_;
  std::vector<double> data_;
};

// y = A x  (A: r x c, x: c)
inline Vector matvec(const Matrix& a, const Vector& x) {
  if (x.size() != a.cols()) throw DimensionError("matvec: shape mismatch");
  Vector y(a.rows(), 0.0);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < a.cols(); ++c) acc += a.at(r, c) * x[c];
    y[r] = acc;
  }
  return y;
}

// y = A^T x  (A: r x c, x: r, y: c)
inline Vector matvec_transposed(const Matrix& a, const Vector& x) {
  if (x.size() != a.rows()) throw DimensionError("matvec_transposed: shape mismatch");
  Vector y(a.cols(), 0.0);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const double xr = x[r];
    for (std::size_t c = 0; c < a.cols(); ++c) y[c] += a.at(r, c) * xr;
  }
  return y;
}

inline double dot(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw DimensionError("dot: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline double norm2(const Vector& v) { return std::sqrt(dot(v, v)); }

// out += scale * (col ⊗ row)
inline void add_outer(Matrix& out, const Vector& col, const Vector& row, double scale) {
  if (out.rows() != col.size() || out.cols() != row.size())
    throw DimensionError("add_outer: shape mismatch");
  for (std::size_t r = 0; r < col.size(); ++r) {
    const double s = scale * col[r];
    for (std::size_t c = 0; c < row.size(); ++c) out.at(r, c) += s * row[c];
  }
}

}  // namespace anyshot

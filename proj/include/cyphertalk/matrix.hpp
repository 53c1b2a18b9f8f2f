#pragma once

// Dense row-major double matrix. Small and unclever; everything here runs
// at desk scale.

#include <cmath>
#include <cstddef>
#include <vector>

#include "cyphertalk/errors.hpp"

namespace cyphertalk {

using Vector = std::vector<double>;

class Matrix {
 public:
  Matrix() = default;
  Matrix(size_t rows, size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  size_t rows() const { return rows_; }
  size_t cols() const { return cols_; }
  size_t size() const { return data_.size(); }

  double& operator()(size_t r, size_t c) { return data_[r * cols_ + c]; }
  double operator()(size_t r, size_t c) const { return data_[r * cols_ + c]; }

  double* row(size_t r) { return data_.data() + r * cols_; }
  const double* row(size_t r) const { return data_.data() + r * cols_; }

  Vector& data() { return data_; }
  const Vector& data() const { return data_; }

  bool operator==(const Matrix& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
  }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

 private:
  size_t rows_ = 0;
  size_t cols_ = 0;
  Vector data_;
};

// y = M x  (M: r x c, x: c)
inline Vector matvec(const Matrix& m, const Vector& x) {
  if (x.size() != m.cols()) throw InputError("matvec: dimension mismatch");
  Vector y(m.rows(), 0.0);
  for (size_t r = 0; r < m.rows(); ++r) {
    const double* mr = m.row(r);
    double acc = 0.0;
    for (size_t c = 0; c < m.cols(); ++c) acc += mr[c] * x[c];
    y[r] = acc;
  }
  return y;
}

// y = M^T x  (M: r x c, x: r)
inline Vector matvec_t(const Matrix& m, const Vector& x) {
  if (x.size() != m.rows()) throw InputError("matvec_t: dimension mismatch");
  Vector y(m.cols(), 0.0);
  for (size_t r = 0; r < m.rows(); ++r) {
    const double* mr = m.row(r);
    const double xr = x[r];
    for (size_t c = 0; c < m.cols(); ++c) y[c] += mr[c] * xr;
  }
  return y;
}

inline double dot(const Vector& a, const Vector& b) {
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline double norm2(const Vector& a) { return std::sqrt(dot(a, a)); }

inline void axpy(double alpha, const Vector& x, Vector& y) {
  for (size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

}  // namespace cyphertalk

#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace statbundle::linalg {

/** Dense row-major matrix, sized for the small systems that appear here (n <= 8). */
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> a;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, 0.0) {}

  double& operator()(std::size_t i, std::size_t j) { return a[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return a[i * cols + j]; }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }
};

inline Matrix multiply(const Matrix& x, const Matrix& y) {
  if (x.cols != y.rows) throw std::invalid_argument("linalg::multiply: shape mismatch");
  Matrix z(x.rows, y.cols);
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t k = 0; k < x.cols; ++k) {
      const double xik = x(i, k);
      for (std::size_t j = 0; j < y.cols; ++j) z(i, j) += xik * y(k, j);
    }
  return z;
}

/** Solve A x = b by Gaussian elimination with partial pivoting. */
inline std::vector<double> solve(Matrix A, std::vector<double> b) {
  const std::size_t n = A.rows;
  if (A.cols != n || b.size() != n) throw std::invalid_argument("linalg::solve: shape mismatch");
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::fabs(A(i, k)) > std::fabs(A(piv, k))) piv = i;
    if (std::fabs(A(piv, k)) < 1e-14) throw std::domain_error("linalg::solve: singular matrix");
    if (piv != k) {
      for (std::size_t j = k; j < n; ++j) std::swap(A(k, j), A(piv, j));
      std::swap(b[k], b[piv]);
    }
    for (std::size_t i = k + 1; i < n; ++i) {
      const double f = A(i, k) / A(k, k);
      if (f == 0.0) continue;
      for (std::size_t j = k; j < n; ++j) A(i, j) -= f * A(k, j);
      b[i] -= f * b[k];
    }
  }
  std::vector<double> x(n, 0.0);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t j = i + 1; j < n; ++j) s -= A(i, j) * x[j];
    x[i] = s / A(i, i);
  }
  return x;
}

inline Matrix inverse(const Matrix& A) {
  const std::size_t n = A.rows;
  if (A.cols != n) throw std::invalid_argument("linalg::inverse: matrix not square");
  Matrix inv(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    std::vector<double> e(n, 0.0);
    e[j] = 1.0;
    const std::vector<double> col = solve(A, std::move(e));
    for (std::size_t i = 0; i < n; ++i) inv(i, j) = col[i];
  }
  return inv;
}

}  // namespace statbundle::linalg

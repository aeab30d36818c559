/*
 * Copyright 2026 The pissm authors
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace pissm::linalg {

struct SingularMatrixError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Small dense row-major double matrix.  This is the verification path for
/// the state space math (matrix exponentials, dense discretization); nothing
/// here runs in the training loop, so clarity wins over speed.
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, 0.0) {}
  Mat(std::size_t r, std::size_t c, std::vector<double> v)
      : rows(r), cols(c), a(std::move(v)) {
    if (a.size() != r * c) throw std::invalid_argument("mat: bad data length");
  }

  static Mat identity(std::size_t n) {
    Mat m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  static Mat diag(const std::vector<double>& d) {
    Mat m(d.size(), d.size());
    for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
    return m;
  }

  double& operator()(std::size_t i, std::size_t j) { return a[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return a[i * cols + j]; }

  bool square() const { return rows == cols; }
};

inline Mat matmul(const Mat& x, const Mat& y) {
  if (x.cols != y.rows) throw std::invalid_argument("matmul: shape mismatch");
  Mat z(x.rows, y.cols);
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t l = 0; l < x.cols; ++l) {
      const double s = x(i, l);
      for (std::size_t j = 0; j < y.cols; ++j) z(i, j) += s * y(l, j);
    }
  return z;
}

inline Mat add(const Mat& x, const Mat& y) {
  if (x.rows != y.rows || x.cols != y.cols)
    throw std::invalid_argument("add: shape mismatch");
  Mat z = x;
  for (std::size_t i = 0; i < z.a.size(); ++i) z.a[i] += y.a[i];
  return z;
}

inline Mat sub(const Mat& x, const Mat& y) {
  if (x.rows != y.rows || x.cols != y.cols)
    throw std::invalid_argument("sub: shape mismatch");
  Mat z = x;
  for (std::size_t i = 0; i < z.a.size(); ++i) z.a[i] -= y.a[i];
  return z;
}

inline Mat scale(const Mat& x, double s) {
  Mat z = x;
  for (double& v : z.a) v *= s;
  return z;
}

inline double max_abs(const Mat& x) {
  double m = 0.0;
  for (double v : x.a) m = std::max(m, std::abs(v));
  return m;
}

inline double norm_inf(const Mat& x) {
  double m = 0.0;
  for (std::size_t i = 0; i < x.rows; ++i) {
    double r = 0.0;
    for (std::size_t j = 0; j < x.cols; ++j) r += std::abs(x(i, j));
    m = std::max(m, r);
  }
  return m;
}

/// LU factorization with partial pivoting, in place.  perm holds the row
/// permutation.  Throws SingularMatrixError when a pivot collapses relative
/// to the matrix scale.
struct Lu {
  Mat lu;
  std::vector<std::size_t> perm;
};

inline Lu lu_factor(Mat m) {
  if (!m.square()) throw std::invalid_argument("lu_factor: square required");
  const std::size_t n = m.rows;
  const double tiny = 1e-12 * std::max(max_abs(m), 1e-300);
  Lu f{std::move(m), std::vector<std::size_t>(n)};
  for (std::size_t i = 0; i < n; ++i) f.perm[i] = i;
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::abs(f.lu(i, k)) > std::abs(f.lu(piv, k))) piv = i;
    if (std::abs(f.lu(piv, k)) <= tiny)
      throw SingularMatrixError("lu_factor: singular matrix");
    if (piv != k) {
      std::swap(f.perm[piv], f.perm[k]);
      for (std::size_t j = 0; j < n; ++j) std::swap(f.lu(piv, j), f.lu(k, j));
    }
    for (std::size_t i = k + 1; i < n; ++i) {
      f.lu(i, k) /= f.lu(k, k);
      const double l = f.lu(i, k);
      for (std::size_t j = k + 1; j < n; ++j) f.lu(i, j) -= l * f.lu(k, j);
    }
  }
  return f;
}

/// Solves A X = B for X given the factorization of A.
inline Mat lu_solve(const Lu& f, const Mat& b) {
  const std::size_t n = f.lu.rows;
  if (b.rows != n) throw std::invalid_argument("lu_solve: shape mismatch");
  Mat x(n, b.cols);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < b.cols; ++j) x(i, j) = b(f.perm[i], j);
  // forward substitution (unit lower)
  for (std::size_t i = 1; i < n; ++i)
    for (std::size_t k = 0; k < i; ++k) {
      const double l = f.lu(i, k);
      for (std::size_t j = 0; j < b.cols; ++j) x(i, j) -= l * x(k, j);
    }
  // back substitution
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t k = i + 1; k < n; ++k) {
      const double u = f.lu(i, k);
      for (std::size_t j = 0; j < b.cols; ++j) x(i, j) -= u * x(k, j);
    }
    const double d = f.lu(i, i);
    for (std::size_t j = 0; j < b.cols; ++j) x(i, j) /= d;
  }
  return x;
}

inline Mat solve(const Mat& a, const Mat& b) { return lu_solve(lu_factor(a), b); }

/// Matrix exponential by scaling and squaring with a Taylor core.  The
/// scaled norm is at most 1/2, where 24 Taylor terms are far below double
/// rounding error; accuracy degrades gracefully with the number of
/// squarings, which is small for the well-conditioned stable systems this
/// project verifies.
inline Mat expm(const Mat& m) {
  if (!m.square()) throw std::invalid_argument("expm: square required");
  const std::size_t n = m.rows;
  int squarings = 0;
  double nrm = norm_inf(m);
  while (nrm > 0.5) {
    nrm *= 0.5;
    ++squarings;
  }
  const Mat as = scale(m, std::ldexp(1.0, -squarings));
  Mat sum = Mat::identity(n);
  Mat term = Mat::identity(n);
  for (int k = 1; k <= 24; ++k) {
    term = scale(matmul(term, as), 1.0 / k);
    sum = add(sum, term);
  }
  for (int k = 0; k < squarings; ++k) sum = matmul(sum, sum);
  return sum;
}

}  // namespace pissm::linalg

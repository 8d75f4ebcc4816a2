#pragma once

// Test-only oracles kept independent of the implementation paths they check:
// finite differences, brute-force Gram sums, and a steepest-descent quadratic
// minimizer.

#include <cmath>
#include <functional>
#include <random>

#include "ksmc/common.hpp"

namespace oracle {

using ksmc::Matrix;
using ksmc::Vector;

/// Central-difference gradient of a scalar function.
inline Vector fd_gradient(const std::function<double(const Vector&)>& f,
                          const Vector& x, double step = 1e-5) {
  Vector g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vector hi = x, lo = x;
    hi[i] += step;
    lo[i] -= step;
    g[i] = (f(hi) - f(lo)) / (2.0 * step);
  }
  return g;
}

/// Second central difference along each coordinate.
inline Vector fd_second_diagonal(const std::function<double(const Vector&)>& f,
                                 const Vector& x, double step = 1e-4) {
  Vector h(x.size());
  const double fx = f(x);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vector hi = x, lo = x;
    hi[i] += step;
    lo[i] -= step;
    h[i] = (f(hi) - 2.0 * fx + f(lo)) / (step * step);
  }
  return h;
}

/// Minimizes 0.5 theta' A theta - theta' b by exact-line-search steepest
/// descent; independent of any factorization-based solve.
inline Vector minimize_quadratic(const Matrix& a, const Vector& b,
                                 int max_iters = 200000, double tol = 1e-12) {
  Vector theta = Vector::Zero(b.size());
  for (int it = 0; it < max_iters; ++it) {
    const Vector g = a * theta - b;
    const double gg = g.squaredNorm();
    if (std::sqrt(gg) < tol) break;
    const double curvature = g.dot(a * g);
    if (!(curvature > 0.0)) break;
    theta -= (gg / curvature) * g;
  }
  return theta;
}

/// Brute-force double-loop MMD^2 from a kernel callable.
inline double mmd2_double_loop(
    const Matrix& x, const Matrix& y,
    const std::function<double(const Vector&, const Vector&)>& kernel, bool biased) {
  const auto n = x.rows();
  const auto m = y.rows();
  double xx = 0.0, yy = 0.0, xy = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      if (!biased && i == j) continue;
      xx += kernel(x.row(i).transpose(), x.row(j).transpose());
    }
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j) {
      if (!biased && i == j) continue;
      yy += kernel(y.row(i).transpose(), y.row(j).transpose());
    }
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < m; ++j)
      xy += kernel(x.row(i).transpose(), y.row(j).transpose());
  const double dn = static_cast<double>(n), dm = static_cast<double>(m);
  const double sxx = biased ? xx / (dn * dn) : xx / (dn * (dn - 1.0));
  const double syy = biased ? yy / (dm * dm) : yy / (dm * (dm - 1.0));
  return sxx + syy - 2.0 * xy / (dn * dm);
}

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, unsigned seed,
                            double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = normal(rng);
  return m;
}

inline Vector random_vector(Eigen::Index size, unsigned seed, double scale = 1.0) {
  return random_matrix(size, 1, seed, scale).col(0);
}

}  // namespace oracle

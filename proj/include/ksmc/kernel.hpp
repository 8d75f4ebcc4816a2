#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "ksmc/common.hpp"
#include "ksmc/rng.hpp"

namespace ksmc {

/// Gaussian kernel k(x,y) = exp(-||x-y||^2 / (2 l^2)) with lengthscale l > 0.
struct GaussianKernel {
  double lengthscale = 1.0;

  explicit GaussianKernel(double l) : lengthscale(l) {
    if (!(l > 0.0)) throw ArgumentError("GaussianKernel: lengthscale must be > 0");
  }
};

inline double kernel_eval(const Vector& x, const Vector& y, double lengthscale) {
  if (x.size() != y.size())
    throw ArgumentError("kernel_eval: dimension mismatch");
  if (!(lengthscale > 0.0))
    throw ArgumentError("kernel_eval: lengthscale must be > 0");
  return std::exp(-(x - y).squaredNorm() / (2.0 * lengthscale * lengthscale));
}

/// Gradient of k(x,y) with respect to x: -(x - y)/l^2 * k(x,y).
inline Vector kernel_grad_x(const Vector& x, const Vector& y, double lengthscale) {
  const double k = kernel_eval(x, y, lengthscale);
  return (-(k / (lengthscale * lengthscale)) * (x - y)).eval();
}

/// Median of the n(n-1)/2 pairwise Euclidean distances; even counts average
/// the two central order statistics. Throws if every point is identical.
inline double median_heuristic(const Matrix& points) {
  const Eigen::Index n = points.rows();
  if (n < 2) throw ArgumentError("median_heuristic: need at least 2 points");
  std::vector<double> dist;
  dist.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
  bool any_distinct = false;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double d = (points.row(i) - points.row(j)).norm();
      if (d > 0.0) any_distinct = true;
      dist.push_back(d);
    }
  }
  if (!any_distinct) throw NumericalError("median_heuristic: degenerate point set");
  const std::size_t m = dist.size();
  const std::size_t hi = m / 2;
  std::nth_element(dist.begin(), dist.begin() + hi, dist.end());
  double med = dist[hi];
  if (m % 2 == 0) {
    const double lo = *std::max_element(dist.begin(), dist.begin() + hi);
    med = 0.5 * (lo + med);
  }
  return med;
}

/// Random Fourier feature map for the Gaussian kernel:
///   phi(x)_i = sqrt(2/m) cos(W_i . x + u_i),
/// W rows ~ N(0, l^-2 I), u ~ U[0, 2pi). Immutable once sampled, so a map can
/// be shared freely across threads.
struct FourierFeatureMap {
  Matrix frequencies;  // m x d
  Vector phases;       // m

  Eigen::Index feature_count() const { return frequencies.rows(); }
  Eigen::Index dim() const { return frequencies.cols(); }
  double scale() const { return std::sqrt(2.0 / static_cast<double>(feature_count())); }
};

inline FourierFeatureMap sample_feature_map(Eigen::Index dim, Eigen::Index m,
                                            double lengthscale, Rng& rng) {
  if (dim < 1 || m < 1)
    throw ArgumentError("sample_feature_map: dim and m must be >= 1");
  if (!(lengthscale > 0.0))
    throw ArgumentError("sample_feature_map: lengthscale must be > 0");
  FourierFeatureMap map;
  map.frequencies.resize(m, dim);
  map.phases.resize(m);
  std::normal_distribution<double> freq(0.0, 1.0 / lengthscale);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < dim; ++j) map.frequencies(i, j) = freq(rng);
    map.phases[i] = phase(rng);
  }
  return map;
}

inline Vector embed(const FourierFeatureMap& map, const Vector& x) {
  if (x.size() != map.dim()) throw ArgumentError("embed: dimension mismatch");
  Vector arg = map.frequencies * x + map.phases;
  return (map.scale() * arg.array().cos()).matrix();
}

/// m x d matrix whose column l is d phi(x) / d x_l.
inline Matrix embed_grad(const FourierFeatureMap& map, const Vector& x) {
  if (x.size() != map.dim()) throw ArgumentError("embed_grad: dimension mismatch");
  Vector arg = map.frequencies * x + map.phases;
  Vector s = (-map.scale() * arg.array().sin()).matrix();
  return map.frequencies.array().colwise() * s.array();
}

/// m x d matrix whose column l is d^2 phi(x) / d x_l^2.
inline Matrix embed_hess_diag(const FourierFeatureMap& map, const Vector& x) {
  if (x.size() != map.dim())
    throw ArgumentError("embed_hess_diag: dimension mismatch");
  Vector arg = map.frequencies * x + map.phases;
  Vector c = (-map.scale() * arg.array().cos()).matrix();
  return map.frequencies.array().square().colwise() * c.array();
}

}  // namespace ksmc

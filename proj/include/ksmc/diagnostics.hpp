#pragma once

#include <array>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "ksmc/common.hpp"
#include "ksmc/particles.hpp"

namespace ksmc {

/// Kernel used inside the MMD estimators: the degree-3 polynomial
/// (x.y + offset)^3 or the Gaussian kernel with lengthscale l.
struct MmdKernel {
  enum class Kind { kPolynomial3, kGaussian };
  Kind kind = Kind::kPolynomial3;
  double offset = 1.0;       // polynomial
  double lengthscale = 1.0;  // gaussian

  static MmdKernel polynomial3(double offset = 1.0) {
    MmdKernel k;
    k.kind = Kind::kPolynomial3;
    k.offset = offset;
    return k;
  }
  static MmdKernel gaussian(double lengthscale) {
    MmdKernel k;
    k.kind = Kind::kGaussian;
    k.lengthscale = lengthscale;
    return k;
  }

  std::string describe() const {
    return kind == Kind::kPolynomial3
               ? "poly3(offset=" + std::to_string(offset) + ")"
               : "gaussian(l=" + std::to_string(lengthscale) + ")";
  }
};

enum class MmdEstimator { kBiased, kUnbiased };

struct MMDResult {
  double value = 0.0;        // sqrt(max(0, mmd_squared)), the headline number
  double mmd_squared = 0.0;  // raw estimate; the U-statistic may dip below 0
  std::string kernel;
  Eigen::Index n_x = 0;
  Eigen::Index n_y = 0;
};

namespace detail {

/// Explicit feature map of the degree-3 polynomial kernel: with
/// z = (x, sqrt(offset)), (z.w)^3 expands over all multi-indices |a| = 3 with
/// features sqrt(3!/a!) z^a, so Gram sums reduce to mean-embedding algebra.
inline Matrix poly3_features(const Matrix& points, double offset) {
  const Eigen::Index n = points.rows();
  const Eigen::Index p = points.cols() + 1;
  const double root_offset = std::sqrt(offset);

  std::vector<std::array<Eigen::Index, 3>> triples;
  for (Eigen::Index i = 0; i < p; ++i)
    for (Eigen::Index j = i; j < p; ++j)
      for (Eigen::Index k = j; k < p; ++k) triples.push_back({i, j, k});

  auto coefficient = [](const std::array<Eigen::Index, 3>& t) {
    if (t[0] == t[1] && t[1] == t[2]) return 1.0;         // 3!/3! = 1
    if (t[0] == t[1] || t[1] == t[2]) return std::sqrt(3.0);  // 3!/2! = 3
    return std::sqrt(6.0);                                // 3!/1! = 6
  };

  Matrix feats(n, static_cast<Eigen::Index>(triples.size()));
  Vector z(p);
  for (Eigen::Index r = 0; r < n; ++r) {
    z.head(p - 1) = points.row(r).transpose();
    z[p - 1] = root_offset;
    for (std::size_t c = 0; c < triples.size(); ++c) {
      const auto& t = triples[c];
      feats(r, static_cast<Eigen::Index>(c)) =
          coefficient(t) * z[t[0]] * z[t[1]] * z[t[2]];
    }
  }
  return feats;
}

struct GramSums {
  double full = 0.0;      // sum over all pairs incl. diagonal
  double diagonal = 0.0;  // sum over k(x_i, x_i)
};

inline GramSums gaussian_gram_self(const Matrix& x, double lengthscale) {
  const Eigen::Index n = x.rows();
  const double inv = -1.0 / (2.0 * lengthscale * lengthscale);
  const Vector sq = x.rowwise().squaredNorm();
  GramSums sums;
  sums.diagonal = static_cast<double>(n);
  constexpr Eigen::Index block = 2048;
  for (Eigen::Index lo = 0; lo < n; lo += block) {
    const Eigen::Index rows = std::min(block, n - lo);
    Matrix dist2 = (-2.0 * x.middleRows(lo, rows) * x.transpose()).rowwise() +
                   sq.transpose();
    dist2.colwise() += sq.segment(lo, rows);
    sums.full += (dist2.array() * inv).exp().sum();
  }
  return sums;
}

inline double gaussian_gram_cross(const Matrix& x, const Matrix& y, double lengthscale) {
  const double inv = -1.0 / (2.0 * lengthscale * lengthscale);
  const Vector sqx = x.rowwise().squaredNorm();
  const Vector sqy = y.rowwise().squaredNorm();
  double total = 0.0;
  constexpr Eigen::Index block = 2048;
  for (Eigen::Index lo = 0; lo < x.rows(); lo += block) {
    const Eigen::Index rows = std::min(block, x.rows() - lo);
    Matrix dist2 = (-2.0 * x.middleRows(lo, rows) * y.transpose()).rowwise() +
                   sqy.transpose();
    dist2.colwise() += sqx.segment(lo, rows);
    total += (dist2.array() * inv).exp().sum();
  }
  return total;
}

}  // namespace detail

/// Two-sample MMD^2 estimate between the rows of X and Y; the biased
/// V-statistic is always >= 0, the unbiased U-statistic may be slightly
/// negative. The headline value is sqrt(max(0, MMD^2)).
inline MMDResult mmd(const Matrix& x, const Matrix& y, const MmdKernel& kernel,
                     MmdEstimator estimator) {
  if (x.cols() != y.cols()) throw ArgumentError("mmd: dimension mismatch");
  const auto n = x.rows();
  const auto m = y.rows();
  if (n < 2 || m < 2) throw ArgumentError("mmd: need at least 2 samples per set");

  double term_xx = 0.0, term_yy = 0.0, term_xy = 0.0;
  if (kernel.kind == MmdKernel::Kind::kPolynomial3) {
    const Matrix fx = detail::poly3_features(x, kernel.offset);
    const Matrix fy = detail::poly3_features(y, kernel.offset);
    const Vector sx = fx.colwise().sum();
    const Vector sy = fy.colwise().sum();
    term_xy = sx.dot(sy) / (static_cast<double>(n) * static_cast<double>(m));
    const double full_xx = sx.squaredNorm();
    const double full_yy = sy.squaredNorm();
    if (estimator == MmdEstimator::kBiased) {
      term_xx = full_xx / (static_cast<double>(n) * static_cast<double>(n));
      term_yy = full_yy / (static_cast<double>(m) * static_cast<double>(m));
    } else {
      term_xx = (full_xx - fx.rowwise().squaredNorm().sum()) /
                (static_cast<double>(n) * static_cast<double>(n - 1));
      term_yy = (full_yy - fy.rowwise().squaredNorm().sum()) /
                (static_cast<double>(m) * static_cast<double>(m - 1));
    }
  } else {
    const auto xx = detail::gaussian_gram_self(x, kernel.lengthscale);
    const auto yy = detail::gaussian_gram_self(y, kernel.lengthscale);
    term_xy = detail::gaussian_gram_cross(x, y, kernel.lengthscale) /
              (static_cast<double>(n) * static_cast<double>(m));
    if (estimator == MmdEstimator::kBiased) {
      term_xx = xx.full / (static_cast<double>(n) * static_cast<double>(n));
      term_yy = yy.full / (static_cast<double>(m) * static_cast<double>(m));
    } else {
      term_xx = (xx.full - xx.diagonal) / (static_cast<double>(n) * static_cast<double>(n - 1));
      term_yy = (yy.full - yy.diagonal) / (static_cast<double>(m) * static_cast<double>(m - 1));
    }
  }

  MMDResult result;
  result.mmd_squared = term_xx + term_yy - 2.0 * term_xy;
  result.value = std::sqrt(std::max(0.0, result.mmd_squared));
  result.kernel = kernel.describe();
  result.n_x = n;
  result.n_y = m;
  return result;
}

/// Rescales both sample sets by the reference set's per-coordinate mean and
/// standard deviation, keeping the polynomial kernel's unit offset meaningful.
inline std::pair<Matrix, Matrix> standardize_by_reference(const Matrix& x,
                                                          const Matrix& reference) {
  const Vector mean = reference.colwise().mean();
  Matrix centered = reference.rowwise() - mean.transpose();
  Vector sd = (centered.array().square().colwise().mean()).sqrt();
  for (Eigen::Index j = 0; j < sd.size(); ++j) sd[j] = std::max(sd[j], 1e-12);
  Matrix xs = (x.rowwise() - mean.transpose()).array().rowwise() / sd.transpose().array();
  Matrix rs = centered.array().rowwise() / sd.transpose().array();
  return {std::move(xs), std::move(rs)};
}

struct Moments {
  Vector mean;
  Matrix covariance;
};

/// Self-normalized weighted mean and covariance of a particle system.
/// Covariance is undefined when all weight sits on one particle.
inline Moments weighted_moments(const ParticleSystem& ps) {
  ParticleSystem copy = ps;
  normalize_log_weights(copy);
  const double effective = ess(copy);
  if (!(effective > 1.0 + 1e-12))
    throw NumericalError("weighted_moments: covariance undefined at ESS <= 1");
  const Vector w = natural_weights(copy);
  Moments m;
  m.mean = weighted_mean(copy.locations, w);
  m.covariance = weighted_covariance(copy.locations, w);
  return m;
}

/// Number of modes with at least one non-negligible particle (weight above
/// 1e-6/N) within Euclidean distance r.
inline int mode_coverage(const ParticleSystem& ps, const std::vector<Vector>& modes,
                         double radius) {
  if (!(radius > 0.0)) throw ArgumentError("mode_coverage: radius must be > 0");
  ParticleSystem copy = ps;
  normalize_log_weights(copy);
  const Vector w = natural_weights(copy);
  const double w_min = 1e-6 / static_cast<double>(ps.size());
  int covered = 0;
  for (const auto& mode : modes) {
    for (Eigen::Index i = 0; i < copy.size(); ++i) {
      if (w[i] <= w_min) continue;
      if ((copy.locations.row(i).transpose() - mode).norm() <= radius) {
        ++covered;
        break;
      }
    }
  }
  return covered;
}

/// sqrt(mean squared elementwise error) between two d x d matrices.
inline double covariance_rmse(const Matrix& estimate, const Matrix& reference) {
  if (estimate.rows() != reference.rows() || estimate.cols() != reference.cols())
    throw ArgumentError("covariance_rmse: shape mismatch");
  return (estimate - reference).norm() / static_cast<double>(estimate.rows());
}

/// Greedy mode extraction from a sample: repeatedly take the remaining point
/// with the highest log-density as a mode center and peel away everything
/// within `radius`. Modes keeping fewer than min_count points are dropped.
inline std::vector<Vector> greedy_modes(const Matrix& samples,
                                        const Vector& log_density, double radius,
                                        int min_count = 1, int max_modes = 64) {
  if (samples.rows() != log_density.size())
    throw ArgumentError("greedy_modes: sample/log-density size mismatch");
  std::vector<bool> taken(static_cast<std::size_t>(samples.rows()), false);
  std::vector<Vector> modes;
  while (static_cast<int>(modes.size()) < max_modes) {
    Eigen::Index best = -1;
    for (Eigen::Index i = 0; i < samples.rows(); ++i)
      if (!taken[static_cast<std::size_t>(i)] &&
          (best < 0 || log_density[i] > log_density[best]))
        best = i;
    if (best < 0) break;
    const Vector center = samples.row(best).transpose();
    int count = 0;
    for (Eigen::Index i = 0; i < samples.rows(); ++i) {
      if (taken[static_cast<std::size_t>(i)]) continue;
      if ((samples.row(i).transpose() - center).norm() <= radius) {
        taken[static_cast<std::size_t>(i)] = true;
        ++count;
      }
    }
    if (count >= min_count) modes.push_back(center);
  }
  return modes;
}

}  // namespace ksmc

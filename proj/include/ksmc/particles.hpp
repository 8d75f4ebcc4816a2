#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "ksmc/common.hpp"
#include "ksmc/rng.hpp"

namespace ksmc {

/// Weighted particle approximation of the current target: N x d locations
/// plus per-particle log-weights (-inf allowed, NaN never).
struct ParticleSystem {
  Matrix locations;    // N x d
  Vector log_weights;  // N

  Eigen::Index size() const { return locations.rows(); }
  Eigen::Index dim() const { return locations.cols(); }

  static ParticleSystem equal_weights(Matrix locations) {
    ParticleSystem ps;
    ps.log_weights = Vector::Constant(locations.rows(),
                                      -std::log(static_cast<double>(locations.rows())));
    ps.locations = std::move(locations);
    return ps;
  }
};

/// Rescales log-weights so logsumexp == 0. Throws when every particle has
/// zero weight (the system died).
inline void normalize_log_weights(ParticleSystem& ps) {
  for (Eigen::Index i = 0; i < ps.log_weights.size(); ++i)
    if (std::isnan(ps.log_weights[i])) ps.log_weights[i] = kNegInf;
  const double lse = log_sum_exp(ps.log_weights);
  if (!std::isfinite(lse)) throw NumericalError("particle system died: all weights zero");
  ps.log_weights.array() -= lse;
}

/// Natural-scale normalized weights; assumes normalized log-weights.
inline Vector natural_weights(const ParticleSystem& ps) {
  return ps.log_weights.array().exp();
}

/// Effective sample size 1 / sum_i w_i^2 for normalized weights; in [1, N].
inline double ess(const ParticleSystem& ps) {
  return std::exp(-log_sum_exp(2.0 * ps.log_weights));
}

enum class ResampleScheme { kSystematic, kMultinomial };

/// Ancestor indices for one resampling pass over normalized weights.
/// Systematic: counts satisfy |count_i - N w_i| < 1; uniform weights map to
/// the identity.
inline std::vector<Eigen::Index> resample_indices(const Vector& weights,
                                                  ResampleScheme scheme, Rng& rng) {
  const Eigen::Index n = weights.size();
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::vector<double> cumulative(static_cast<std::size_t>(n));
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    acc += std::max(weights[i], 0.0);
    cumulative[static_cast<std::size_t>(i)] = acc;
  }
  if (!(acc > 0.0) || !std::isfinite(acc))
    throw NumericalError("particle system died: zero total resampling weight");

  std::uniform_real_distribution<double> unif(0.0, 1.0);
  if (scheme == ResampleScheme::kSystematic) {
    const double u0 = unif(rng);
    Eigen::Index j = 0;
    for (Eigen::Index k = 0; k < n; ++k) {
      const double pos = acc * (static_cast<double>(k) + u0) / static_cast<double>(n);
      while (j + 1 < n && cumulative[static_cast<std::size_t>(j)] <= pos) ++j;
      idx[static_cast<std::size_t>(k)] = j;
    }
  } else {
    for (Eigen::Index k = 0; k < n; ++k) {
      const double pos = acc * unif(rng);
      const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), pos);
      idx[static_cast<std::size_t>(k)] =
          std::min<Eigen::Index>(static_cast<Eigen::Index>(it - cumulative.begin()), n - 1);
    }
  }
  return idx;
}

/// Replaces the system with N equally weighted draws (with replacement)
/// proportional to the current weights.
inline ParticleSystem resample(const ParticleSystem& ps, ResampleScheme scheme,
                               Rng& rng) {
  const auto idx = resample_indices(natural_weights(ps), scheme, rng);
  ParticleSystem out;
  out.locations.resize(ps.size(), ps.dim());
  for (Eigen::Index k = 0; k < ps.size(); ++k)
    out.locations.row(k) = ps.locations.row(idx[static_cast<std::size_t>(k)]);
  out.log_weights =
      Vector::Constant(ps.size(), -std::log(static_cast<double>(ps.size())));
  return out;
}

/// Self-normalized weighted mean of the particle locations.
inline Vector weighted_mean(const Matrix& locations, const Vector& weights) {
  const double total = weights.sum();
  if (!(total > 0.0)) throw NumericalError("weighted_mean: zero total weight");
  return locations.transpose() * (weights / total);
}

/// Self-normalized weighted covariance (population form, no Bessel factor).
inline Matrix weighted_covariance(const Matrix& locations, const Vector& weights) {
  const double total = weights.sum();
  if (!(total > 0.0)) throw NumericalError("weighted_covariance: zero total weight");
  const Vector w = weights / total;
  const Vector mean = locations.transpose() * w;
  Matrix centered = locations.rowwise() - mean.transpose();
  Matrix cov = centered.transpose() * w.asDiagonal() * centered;
  return 0.5 * (cov + cov.transpose());
}

}  // namespace ksmc

#pragma once

#include <cmath>
#include <utility>

#include "ksmc/common.hpp"
#include "ksmc/rng.hpp"

namespace ksmc {

/// Symmetrize and Cholesky-factor a covariance, escalating a diagonal jitter
/// (3 retries, x10 each) before giving up.
inline Matrix cholesky_with_jitter(const Matrix& cov) {
  Matrix sym = 0.5 * (cov + cov.transpose());
  const double scale = std::max(sym.diagonal().cwiseAbs().maxCoeff(), 1e-30);
  double jitter = 0.0;
  for (int attempt = 0; attempt <= 3; ++attempt) {
    Eigen::LLT<Matrix> llt(jitter > 0.0
                               ? Matrix(sym + jitter * Matrix::Identity(sym.rows(), sym.cols()))
                               : sym);
    if (llt.info() == Eigen::Success) return llt.matrixL();
    jitter = (jitter == 0.0) ? 1e-10 * scale : 10.0 * jitter;
  }
  throw NumericalError("cholesky_with_jitter: matrix not SPD after jitter escalation");
}

/// Multivariate normal with cached lower Cholesky factor. Serves both as a
/// sampling distribution and as an evaluable proposal density.
class GaussianDistribution {
 public:
  GaussianDistribution() = default;

  GaussianDistribution(Vector mean, const Matrix& cov)
      : mean_(std::move(mean)), chol_(cholesky_with_jitter(cov)) {
    init_log_norm();
  }

  static GaussianDistribution from_cholesky(Vector mean, Matrix chol_lower) {
    GaussianDistribution g;
    g.mean_ = std::move(mean);
    g.chol_ = std::move(chol_lower);
    g.init_log_norm();
    return g;
  }

  static GaussianDistribution isotropic(Vector mean, double variance) {
    const Eigen::Index d = mean.size();
    GaussianDistribution g;
    g.mean_ = std::move(mean);
    g.chol_ = std::sqrt(variance) * Matrix::Identity(d, d);
    g.init_log_norm();
    return g;
  }

  Eigen::Index dim() const { return mean_.size(); }
  const Vector& mean() const { return mean_; }
  const Matrix& chol_lower() const { return chol_; }
  Matrix covariance() const { return chol_ * chol_.transpose(); }

  Vector sample(Rng& rng) const {
    Vector z(dim());
    std::normal_distribution<double> stdnorm(0.0, 1.0);
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = stdnorm(rng);
    return mean_ + chol_ * z;
  }

  double log_density(const Vector& x) const {
    Vector r = chol_.template triangularView<Eigen::Lower>().solve(x - mean_);
    return log_norm_ - 0.5 * r.squaredNorm();
  }

 private:
  void init_log_norm() {
    double log_det = 0.0;
    for (Eigen::Index i = 0; i < chol_.rows(); ++i)
      log_det += std::log(chol_(i, i));
    log_norm_ = -0.5 * static_cast<double>(dim()) * kLog2Pi - log_det;
  }

  Vector mean_;
  Matrix chol_;
  double log_norm_ = 0.0;
};

inline double gaussian_log_density_1d(double x, double mean, double variance) {
  const double r = x - mean;
  return -0.5 * (kLog2Pi + std::log(variance)) - 0.5 * r * r / variance;
}

}  // namespace ksmc

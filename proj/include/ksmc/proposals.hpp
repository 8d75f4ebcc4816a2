#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <utility>

#include "ksmc/common.hpp"
#include "ksmc/emulators.hpp"
#include "ksmc/gaussian.hpp"

namespace ksmc {

/// N(. | x, nu^2 Sigma_t + gamma^2 I): the globally adapted random-walk
/// proposal. The covariance is shared across particles, so the Cholesky
/// factor is computed once at construction.
class AsmcProposal {
 public:
  AsmcProposal(const Matrix& covariance, double nu2, double gamma2) {
    Matrix cov = nu2 * covariance;
    cov.diagonal().array() += gamma2;
    chol_ = cholesky_with_jitter(cov);
  }

  GaussianDistribution operator()(const Vector& x) const {
    return GaussianDistribution::from_cholesky(x, chol_);
  }

 private:
  Matrix chol_;
};

inline GaussianDistribution propose_asmc(const Vector& x, const Matrix& covariance,
                                         double nu2, double gamma2) {
  return AsmcProposal(covariance, nu2, gamma2)(x);
}

/// Fixed-scale isotropic random walk N(. | x, nu^2 I) (the RWSMC move).
class RandomWalkProposal {
 public:
  explicit RandomWalkProposal(double nu2) : nu2_(nu2) {}

  GaussianDistribution operator()(const Vector& x) const {
    return GaussianDistribution::isotropic(x, nu2_);
  }

 private:
  double nu2_;
};

/// N(. | x, proposal_covariance(emulator, x)): the kernel-adaptive move with
/// locally aligned covariance. State-dependent, so q(x'|x) != q(x|x') and the
/// Hastings correction matters.
class KasmcProposal {
 public:
  explicit KasmcProposal(std::shared_ptr<const CovarianceEmulator> emulator)
      : emulator_(std::move(emulator)) {}

  GaussianDistribution operator()(const Vector& x) const {
    return GaussianDistribution(x, emulator_->proposal_covariance(x));
  }

 private:
  std::shared_ptr<const CovarianceEmulator> emulator_;
};

inline GaussianDistribution propose_kasmc(const Vector& x,
                                          const CovarianceEmulator& emulator) {
  return GaussianDistribution(x, emulator.proposal_covariance(x));
}

/// Gradient-drift proposal N(. | x + drift(x), nu^2 Sigma_t) with the single
/// gradient step drift(x) = delta * grad(x), optionally norm-clipped.
/// Covers both GRIS (exact target gradients) and KGRIS (emulated gradients).
class DriftProposal {
 public:
  using GradientFn = std::function<Vector(const Vector&)>;

  DriftProposal(GradientFn gradient, double delta, const Matrix& covariance,
                double nu2, double max_drift_norm = 0.0)
      : gradient_(std::move(gradient)),
        delta_(delta),
        max_drift_norm_(max_drift_norm) {
    chol_ = cholesky_with_jitter((nu2 * covariance).eval());
  }

  GaussianDistribution operator()(const Vector& x) const {
    Vector drift = delta_ * gradient_(x);
    if (max_drift_norm_ > 0.0) {
      const double norm = drift.norm();
      if (norm > max_drift_norm_) drift *= max_drift_norm_ / norm;
    }
    return GaussianDistribution::from_cholesky(x + drift, chol_);
  }

 private:
  GradientFn gradient_;
  double delta_;
  double max_drift_norm_;
  Matrix chol_;
};

inline GaussianDistribution propose_gris(const Vector& x, const Vector& log_grad,
                                         double delta, double nu2,
                                         const Matrix& covariance) {
  return GaussianDistribution(x + delta * log_grad, (nu2 * covariance).eval());
}

inline GaussianDistribution propose_kgris(const Vector& x,
                                          const GradientEmulator& emulator,
                                          double delta, double nu2,
                                          const Matrix& covariance,
                                          double max_drift_norm = 0.0) {
  Vector drift = delta * emulator.log_density_gradient(x);
  if (max_drift_norm > 0.0) {
    const double norm = drift.norm();
    if (norm > max_drift_norm) drift *= max_drift_norm / norm;
  }
  return GaussianDistribution(x + drift, (nu2 * covariance).eval());
}

}  // namespace ksmc

#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "ksmc/common.hpp"
#include "ksmc/gaussian.hpp"
#include "ksmc/rng.hpp"

namespace ksmc {

/// Unnormalized log-density interface. Zero-density points return -inf, never
/// NaN. Noisy targets (is_noisy() == true) give stochastic but natural-scale
/// unbiased evaluations and require a caller-supplied rng stream.
class TargetDensity {
 public:
  virtual ~TargetDensity() = default;

  virtual Eigen::Index dim() const = 0;
  virtual double log_density(const Vector& x) const = 0;

  virtual bool has_gradient() const { return false; }
  virtual Vector log_density_grad(const Vector& x) const {
    (void)x;
    throw ArgumentError("target does not provide gradients");
  }

  virtual bool is_noisy() const { return false; }
  virtual double log_density(const Vector& x, Rng& rng) const {
    (void)rng;
    return log_density(x);
  }
};

/// Adapter wrapping plain callables as a target; handy for tests and custom
/// densities.
class FunctionTarget final : public TargetDensity {
 public:
  using LogDensityFn = std::function<double(const Vector&)>;
  using GradFn = std::function<Vector(const Vector&)>;

  FunctionTarget(Eigen::Index dim, LogDensityFn f)
      : dim_(dim), f_(std::move(f)) {}
  FunctionTarget(Eigen::Index dim, LogDensityFn f, GradFn g)
      : dim_(dim), f_(std::move(f)), grad_(std::move(g)) {}

  Eigen::Index dim() const override { return dim_; }
  double log_density(const Vector& x) const override { return f_(x); }
  bool has_gradient() const override { return static_cast<bool>(grad_); }
  Vector log_density_grad(const Vector& x) const override {
    if (!grad_) throw ArgumentError("FunctionTarget: no gradient configured");
    return grad_(x);
  }

 private:
  Eigen::Index dim_;
  LogDensityFn f_;
  GradFn grad_;
};

/// Normalized multivariate Gaussian target with exact gradient. An optional
/// log_scale offsets the density so tests can use targets with a known
/// non-unit normalizing constant (log Z = log_scale).
class GaussianTarget final : public TargetDensity {
 public:
  GaussianTarget(Vector mean, const Matrix& cov, double log_scale = 0.0)
      : dist_(std::move(mean), cov), log_scale_(log_scale) {
    precision_ = dist_.chol_lower().transpose().template triangularView<Eigen::Upper>().solve(
        Matrix(dist_.chol_lower().template triangularView<Eigen::Lower>().solve(
            Matrix::Identity(dist_.dim(), dist_.dim()))));
  }

  Eigen::Index dim() const override { return dist_.dim(); }
  double log_density(const Vector& x) const override {
    return dist_.log_density(x) + log_scale_;
  }
  bool has_gradient() const override { return true; }
  Vector log_density_grad(const Vector& x) const override {
    return -precision_ * (x - dist_.mean());
  }

  /// log of the target's total mass (0 for a plain normalized Gaussian).
  double log_normalizer() const { return log_scale_; }
  Vector sample(Rng& rng) const { return dist_.sample(rng); }
  const GaussianDistribution& distribution() const { return dist_; }

 private:
  GaussianDistribution dist_;
  Matrix precision_;
  double log_scale_;
};

/// Finite mixture of Gaussians with exact gradient. Component weights must be
/// positive and are normalized; log_scale again carries a known total mass.
class GaussianMixtureTarget final : public TargetDensity {
 public:
  GaussianMixtureTarget(std::vector<double> weights, std::vector<Vector> means,
                        const std::vector<Matrix>& covs, double log_scale = 0.0)
      : log_scale_(log_scale) {
    if (weights.empty() || weights.size() != means.size() ||
        weights.size() != covs.size())
      throw ArgumentError("GaussianMixtureTarget: inconsistent component lists");
    double total = 0.0;
    for (double w : weights) {
      if (!(w > 0.0)) throw ArgumentError("GaussianMixtureTarget: weights must be > 0");
      total += w;
    }
    dim_ = means.front().size();
    for (std::size_t k = 0; k < weights.size(); ++k) {
      if (means[k].size() != dim_)
        throw ArgumentError("GaussianMixtureTarget: component dim mismatch");
      components_.emplace_back(means[k], covs[k]);  // throws ConfigError-worthy on non-SPD
      log_weights_.push_back(std::log(weights[k] / total));
      Matrix prec = covs[k].llt().solve(Matrix::Identity(dim_, dim_));
      precisions_.push_back(0.5 * (prec + prec.transpose()));
    }
  }

  Eigen::Index dim() const override { return dim_; }

  double log_density(const Vector& x) const override {
    Vector lp(static_cast<Eigen::Index>(components_.size()));
    for (std::size_t k = 0; k < components_.size(); ++k)
      lp[static_cast<Eigen::Index>(k)] = log_weights_[k] + components_[k].log_density(x);
    return log_sum_exp(lp) + log_scale_;
  }

  bool has_gradient() const override { return true; }

  Vector log_density_grad(const Vector& x) const override {
    Vector lp(static_cast<Eigen::Index>(components_.size()));
    for (std::size_t k = 0; k < components_.size(); ++k)
      lp[static_cast<Eigen::Index>(k)] = log_weights_[k] + components_[k].log_density(x);
    const double lse = log_sum_exp(lp);
    Vector g = Vector::Zero(dim_);
    for (std::size_t k = 0; k < components_.size(); ++k) {
      const double resp = std::exp(lp[static_cast<Eigen::Index>(k)] - lse);
      g.noalias() -= resp * (precisions_[k] * (x - components_[k].mean()));
    }
    return g;
  }

  double log_normalizer() const { return log_scale_; }

  Vector sample(Rng& rng) const {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    double u = unif(rng);
    std::size_t k = 0;
    for (; k + 1 < components_.size(); ++k) {
      u -= std::exp(log_weights_[k]);
      if (u <= 0.0) break;
    }
    return components_[k].sample(rng);
  }

 private:
  Eigen::Index dim_ = 0;
  std::vector<GaussianDistribution> components_;
  std::vector<Matrix> precisions_;
  std::vector<double> log_weights_;
  double log_scale_;
};

/// Twisted banana-shaped benchmark density in d >= 2 dimensions:
///   B(y; b, v) = N(y_1; 0, v) N(y_2; b(y_1^2 - v), 1) prod_{j>=3} N(y_j; 0, 1),
/// normalized (log Z = 0). The twist in y_2 is a volume-preserving shear of
/// N(0, diag(v, 1, ..., 1)), which gives an exact sampler and closed-form
/// moments.
class BananaTarget final : public TargetDensity {
 public:
  BananaTarget(Eigen::Index dim, double twist, double first_variance)
      : dim_(dim), b_(twist), v_(first_variance) {
    if (dim < 2) throw ArgumentError("BananaTarget: dim must be >= 2");
    if (!(first_variance > 0.0))
      throw ArgumentError("BananaTarget: first-component variance must be > 0");
  }

  Eigen::Index dim() const override { return dim_; }
  double twist() const { return b_; }
  double first_variance() const { return v_; }

  double log_density(const Vector& y) const override {
    if (y.size() != dim_) throw ArgumentError("BananaTarget: dimension mismatch");
    double lp = gaussian_log_density_1d(y[0], 0.0, v_);
    lp += gaussian_log_density_1d(y[1], b_ * (y[0] * y[0] - v_), 1.0);
    for (Eigen::Index j = 2; j < dim_; ++j)
      lp += gaussian_log_density_1d(y[j], 0.0, 1.0);
    return lp;
  }

  bool has_gradient() const override { return true; }

  Vector log_density_grad(const Vector& y) const override {
    if (y.size() != dim_) throw ArgumentError("BananaTarget: dimension mismatch");
    Vector g(dim_);
    const double resid = y[1] - b_ * (y[0] * y[0] - v_);
    g[0] = -y[0] / v_ + resid * 2.0 * b_ * y[0];
    g[1] = -resid;
    for (Eigen::Index j = 2; j < dim_; ++j) g[j] = -y[j];
    return g;
  }

  /// Exact draw via the shear: w ~ N(0, diag(v,1,...,1)), then
  /// y = (w_1, w_2 + b(w_1^2 - v), w_3, ...).
  Vector sample(Rng& rng) const {
    std::normal_distribution<double> stdnorm(0.0, 1.0);
    Vector y(dim_);
    for (Eigen::Index j = 0; j < dim_; ++j) y[j] = stdnorm(rng);
    y[0] *= std::sqrt(v_);
    y[1] += b_ * (y[0] * y[0] - v_);
    return y;
  }

  Matrix sample_matrix(Eigen::Index n, Rng& rng) const {
    Matrix out(n, dim_);
    for (Eigen::Index i = 0; i < n; ++i) out.row(i) = sample(rng).transpose();
    return out;
  }

  /// Closed-form covariance: diag(v, 1 + 2 b^2 v^2, 1, ..., 1); mean is zero.
  Matrix exact_covariance() const {
    Vector d = Vector::Ones(dim_);
    d[0] = v_;
    d[1] = 1.0 + 2.0 * b_ * b_ * v_ * v_;
    return d.asDiagonal();
  }

 private:
  Eigen::Index dim_;
  double b_;
  double v_;
};

/// Pseudo-marginal wrapper: replaces the inner density's natural-scale value
/// L(x) with L(x) * eps, where eps is log-normal with unit mean
/// (log eps ~ N(-tau^2/2, tau^2)), so the estimate stays unbiased.
class NoisyTargetWrapper final : public TargetDensity {
 public:
  NoisyTargetWrapper(std::shared_ptr<const TargetDensity> inner, double noise_tau2)
      : inner_(std::move(inner)), tau2_(noise_tau2) {
    if (tau2_ < 0.0) throw ArgumentError("NoisyTargetWrapper: tau^2 must be >= 0");
  }

  Eigen::Index dim() const override { return inner_->dim(); }
  bool is_noisy() const override { return tau2_ > 0.0; }

  double log_density(const Vector& x) const override {
    if (tau2_ == 0.0) return inner_->log_density(x);
    throw ArgumentError("NoisyTargetWrapper: evaluation requires an rng stream");
  }

  double log_density(const Vector& x, Rng& rng) const override {
    const double exact = inner_->log_density(x);
    if (tau2_ == 0.0 || exact == kNegInf) return exact;
    std::normal_distribution<double> noise(-0.5 * tau2_, std::sqrt(tau2_));
    return exact + noise(rng);
  }

  const TargetDensity& inner() const { return *inner_; }
  double noise_tau2() const { return tau2_; }

 private:
  std::shared_ptr<const TargetDensity> inner_;
  double tau2_;
};

}  // namespace ksmc

#pragma once

#include <cmath>
#include <numeric>
#include <optional>
#include <vector>

#include "ksmc/common.hpp"
#include "ksmc/kernel.hpp"
#include "ksmc/rng.hpp"

namespace ksmc {

struct CovarianceEmulatorConfig {
  Eigen::Index max_anchors = 500;   // n0
  double scale_nu2 = 1.0;           // nu^2
  double exploration_gamma2 = 0.01; // gamma^2, keeps proposals SPD
  double fallback_lengthscale = 1.0;
};

/// Weighted kernel covariance emulator. Queried at x it yields the locally
/// aligned Gaussian proposal covariance
///   gamma^2 I + nu^2 M C_w M^T,
/// with M = 2[grad_x k(x, z_1) | ... | grad_x k(x, z_n0)] over the anchor set
/// and C_w = diag(w) - w w^T the weighted centering matrix.
class CovarianceEmulator {
 public:
  CovarianceEmulator(Matrix anchors, Vector anchor_weights, double lengthscale,
                     double scale_nu2, double exploration_gamma2)
      : anchors_(std::move(anchors)),
        weights_(std::move(anchor_weights)),
        lengthscale_(lengthscale),
        nu2_(scale_nu2),
        gamma2_(exploration_gamma2) {
    if (weights_.size() != anchors_.rows())
      throw ArgumentError("CovarianceEmulator: anchor/weight size mismatch");
    const double total = weights_.sum();
    if (!(total > 0.0))
      throw NumericalError("CovarianceEmulator: degenerate weights");
    weights_ /= total;
    if (!(lengthscale_ > 0.0))
      throw ArgumentError("CovarianceEmulator: lengthscale must be > 0");
  }

  Eigen::Index dim() const { return anchors_.cols(); }
  Eigen::Index anchor_count() const { return anchors_.rows(); }
  const Matrix& anchors() const { return anchors_; }
  const Vector& anchor_weights() const { return weights_; }
  double lengthscale() const { return lengthscale_; }
  double scale_nu2() const { return nu2_; }
  double exploration_gamma2() const { return gamma2_; }

  void set_scale_nu2(double nu2) { nu2_ = nu2; }

  /// 1 / sum w_i^2 for the normalized anchor weights: the number of anchors
  /// effectively informing the centering matrix.
  double effective_anchor_count() const { return 1.0 / weights_.squaredNorm(); }

  /// Lengthscale- and count-normalization to apply on top of an O(1) adapted
  /// nu^2. The kernel-gradient columns carry a 1/l^2 factor, so the raw
  /// quadratic form scales like n_eff k^2 / l^2; multiplying nu^2 by
  /// n_eff l^4 turns the emulator term into a k-weighted local anchor
  /// covariance that follows the particle cloud's scale. At uniform weights
  /// and the unit-exponent kernel (l = 1/sqrt(2)) this reproduces the
  /// uncentered form I - (1/n) 1 1^T with the constant absorbed into nu^2.
  double scale_normalization() const {
    const double l2 = lengthscale_ * lengthscale_;
    return effective_anchor_count() * l2 * l2;
  }

  /// gamma^2 I + nu^2 (M diag(w) M^T - (M w)(M w)^T); symmetric, SPD.
  Matrix proposal_covariance(const Vector& x) const {
    if (x.size() != dim())
      throw ArgumentError("proposal_covariance: dimension mismatch");
    const Eigen::Index d = dim();
    const Eigen::Index n0 = anchor_count();
    Matrix m_grad(d, n0);
    const double inv_l2 = 1.0 / (lengthscale_ * lengthscale_);
    for (Eigen::Index a = 0; a < n0; ++a) {
      const Vector diff = x - anchors_.row(a).transpose();
      const double k = std::exp(-0.5 * inv_l2 * diff.squaredNorm());
      m_grad.col(a) = (-2.0 * inv_l2 * k) * diff;  // 2 grad_x k(x, z_a)
    }
    const Vector mw = m_grad * weights_;
    Matrix raw = m_grad * weights_.asDiagonal() * m_grad.transpose();
    raw.noalias() -= mw * mw.transpose();
    Matrix cov = 0.5 * (raw + raw.transpose());
    cov *= nu2_;
    cov.diagonal().array() += gamma2_;
    return cov;
  }

 private:
  Matrix anchors_;
  Vector weights_;
  double lengthscale_;
  double nu2_;
  double gamma2_;
};

namespace detail {

/// Weighted sampling without replacement (exponential-keys method): draw
/// `count` distinct row indices with probability proportional to weight.
inline std::vector<Eigen::Index> sample_without_replacement(const Vector& weights,
                                                            Eigen::Index count,
                                                            Rng& rng) {
  std::vector<std::pair<double, Eigen::Index>> keys;
  keys.reserve(static_cast<std::size_t>(weights.size()));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (Eigen::Index i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    const double u = std::max(unif(rng), 1e-300);
    keys.emplace_back(-std::log(u) / weights[i], i);
  }
  const auto take = std::min<std::size_t>(static_cast<std::size_t>(count), keys.size());
  std::partial_sort(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(take),
                    keys.end());
  std::vector<Eigen::Index> idx(take);
  for (std::size_t k = 0; k < take; ++k) idx[k] = keys[k].second;
  return idx;
}

}  // namespace detail

/// Fits the covariance emulator on a weighted particle set. When n exceeds
/// the anchor budget, anchors are subsampled by weight without replacement
/// and carry uniform anchor weights (the draw already accounted for them);
/// otherwise all particles are kept with their normalized weights. The
/// kernel lengthscale comes from the median heuristic on the anchors, falling
/// back to config.fallback_lengthscale when the anchor set is degenerate.
inline CovarianceEmulator fit_covariance_emulator(const Matrix& particles,
                                                  const Vector& weights,
                                                  const CovarianceEmulatorConfig& config,
                                                  Rng& rng) {
  const Eigen::Index n = particles.rows();
  if (n < 2) throw ArgumentError("fit_covariance_emulator: need n >= 2");
  if (weights.size() != n)
    throw ArgumentError("fit_covariance_emulator: weight size mismatch");
  if (!(weights.maxCoeff() > 0.0) || (weights.array() < 0.0).any())
    throw NumericalError("fit_covariance_emulator: degenerate weights");

  Matrix anchors;
  Vector anchor_weights;
  if (n <= config.max_anchors) {
    anchors = particles;
    anchor_weights = weights;
  } else {
    const auto idx = detail::sample_without_replacement(weights, config.max_anchors, rng);
    anchors.resize(static_cast<Eigen::Index>(idx.size()), particles.cols());
    for (std::size_t k = 0; k < idx.size(); ++k)
      anchors.row(static_cast<Eigen::Index>(k)) = particles.row(idx[k]);
    anchor_weights = Vector::Ones(anchors.rows());
  }

  double lengthscale = config.fallback_lengthscale;
  if (anchors.rows() >= 2) {
    try {
      const double med = median_heuristic(anchors);
      if (med > 0.0) lengthscale = med;
    } catch (const NumericalError&) {
      // collapsed anchor set; keep the fallback
    }
  }
  return CovarianceEmulator(std::move(anchors), std::move(anchor_weights),
                            lengthscale, config.scale_nu2, config.exploration_gamma2);
}

/// Finite-feature exponential-family gradient emulator. The log-density model
/// is f(x) = theta^T phi(x); theta solves (C + lambda I) theta = b with the
/// weighted score-matching moments
///   b = -(1/sum w) sum_i w_i sum_l hess_diag(x_i)_l,
///   C =  (1/sum w) sum_i w_i sum_l grad(x_i)_l grad(x_i)_l^T.
/// Batches can be accumulated across iterations; each batch enters with its
/// weights normalized so the fit is invariant to weight rescaling.
class GradientEmulator {
 public:
  explicit GradientEmulator(FourierFeatureMap map,
                            std::optional<double> ridge = std::nullopt)
      : map_(std::move(map)), ridge_(ridge) {
    const Eigen::Index m = map_.feature_count();
    b_sum_ = Vector::Zero(m);
    c_sum_ = Matrix::Zero(m, m);
    theta_ = Vector::Zero(m);
  }

  const FourierFeatureMap& feature_map() const { return map_; }
  Eigen::Index dim() const { return map_.dim(); }
  const Vector& theta() const { return theta_; }
  int batch_count() const { return batches_; }

  /// Adds one weighted particle batch to the (b, C) running sums.
  void accumulate(const Matrix& particles, const Vector& weights) {
    const Eigen::Index n = particles.rows();
    if (n < 1) throw ArgumentError("GradientEmulator: empty batch");
    if (weights.size() != n)
      throw ArgumentError("GradientEmulator: weight size mismatch");
    if (particles.cols() != dim())
      throw ArgumentError("GradientEmulator: dimension mismatch");
    const double total = weights.sum();
    if (!(total > 0.0) || (weights.array() < 0.0).any())
      throw NumericalError("GradientEmulator: degenerate weights");

    for (Eigen::Index i = 0; i < n; ++i) {
      const double w = weights[i] / total;
      if (w == 0.0) continue;
      const Vector x = particles.row(i).transpose();
      b_sum_.noalias() -= w * embed_hess_diag(map_, x).rowwise().sum();
      c_sum_.selfadjointView<Eigen::Lower>().rankUpdate(embed_grad(map_, x), w);
    }
    ++batches_;
    fitted_ = false;
  }

  /// Solves for theta from the accumulated sums. A ridge of nullopt means the
  /// scale-robust default 1e-3 * trace(C) / m; an explicit 0 requires C to be
  /// nonsingular.
  void refit() {
    if (batches_ == 0) throw NumericalError("GradientEmulator: nothing accumulated");
    const Eigen::Index m = map_.feature_count();
    const double inv_batches = 1.0 / static_cast<double>(batches_);
    Matrix c = Matrix(c_sum_.selfadjointView<Eigen::Lower>()) * inv_batches;
    Vector b = b_sum_ * inv_batches;
    const double lambda =
        ridge_ ? *ridge_ : 1e-3 * c.trace() / static_cast<double>(m);
    c.diagonal().array() += lambda;

    Eigen::LDLT<Matrix> ldlt(c);
    const Vector d = ldlt.vectorD();
    const double dmax = d.cwiseAbs().maxCoeff();
    if (ldlt.info() != Eigen::Success || !(dmax > 0.0) ||
        d.cwiseAbs().minCoeff() < 1e-13 * dmax || d.minCoeff() <= 0.0) {
      if (!ridge_ || *ridge_ == 0.0)
        throw NumericalError("GradientEmulator: singular system; increase ridge");
    }
    theta_ = ldlt.solve(b);
    if (!theta_.allFinite())
      throw NumericalError("GradientEmulator: singular system; increase ridge");
    fitted_ = true;
  }

  bool fitted() const { return fitted_; }

  /// Estimated log-target gradient: embed_grad(x)^T theta.
  Vector log_density_gradient(const Vector& x) const {
    return embed_grad(map_, x).transpose() * theta_;
  }

  /// Model log-density f(x) = theta^T phi(x) (unnormalized).
  double log_density(const Vector& x) const { return theta_.dot(embed(map_, x)); }

 private:
  FourierFeatureMap map_;
  std::optional<double> ridge_;
  Vector b_sum_;
  Matrix c_sum_;  // lower triangle holds the accumulated sum
  Vector theta_;
  int batches_ = 0;
  bool fitted_ = false;
};

/// One-shot fit over a single weighted batch.
inline GradientEmulator fit_gradient_emulator(const Matrix& particles,
                                              const Vector& weights,
                                              FourierFeatureMap map,
                                              std::optional<double> ridge = std::nullopt) {
  GradientEmulator emulator(std::move(map), ridge);
  emulator.accumulate(particles, weights);
  emulator.refit();
  return emulator;
}

}  // namespace ksmc

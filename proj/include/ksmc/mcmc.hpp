#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <vector>

#include "ksmc/common.hpp"
#include "ksmc/emulators.hpp"
#include "ksmc/gaussian.hpp"
#include "ksmc/particles.hpp"
#include "ksmc/proposals.hpp"
#include "ksmc/rng.hpp"
#include "ksmc/smc.hpp"
#include "ksmc/targets.hpp"

namespace ksmc {

/// Single-chain MCMC used for benchmark references and as the untempered
/// comparison point for the SMC samplers. Proposals: plain isotropic walk,
/// globally adapted walk N(x, nu^2 Sigma_hat + gamma^2 I), or the kernel
/// covariance emulator refit periodically on the chain history. Scale
/// adaptation follows the diminishing schedule lambda_t = lambda0 / sqrt(t).
struct McmcConfig {
  enum class Proposal { kIsotropic, kAdaptiveGlobal, kKernelEmulator };
  Proposal proposal = Proposal::kAdaptiveGlobal;
  long iterations = 50000;
  double burn_in_fraction = 0.5;
  Eigen::Index n_out = 1000;  // evenly thinned post burn-in output size
  double nu0_sq = 0.0;        // 0 -> 2.38^2 / d
  double gamma2 = 0.01;
  double lambda0 = 1.0;
  double alpha_opt = 0.234;
  Eigen::Index emulator_anchors = 500;
  long refit_interval = 250;
  std::uint64_t seed = 0;
};

inline Matrix run_mcmc_chain(const TargetDensity& target,
                             const GaussianDistribution& initial,
                             const McmcConfig& config) {
  const Eigen::Index d = target.dim();
  if (config.iterations < 1) throw ConfigError("run_mcmc_chain: iterations must be >= 1");
  Rng rng = substream(config.seed, 0, 0, StreamId::kInit);

  Vector x = initial.sample(rng);
  double lp = target.log_density(x, rng);
  double nu2 = config.nu0_sq > 0.0 ? config.nu0_sq : 2.38 * 2.38 / static_cast<double>(d);

  // Running history moments for the adaptive-global proposal.
  Vector hist_mean = x;
  Matrix hist_m2 = Matrix::Zero(d, d);
  long hist_n = 1;

  // Thinned history buffer feeding the kernel emulator.
  std::vector<Vector> history;
  history.reserve(4096);
  history.push_back(x);
  std::unique_ptr<CovarianceEmulator> emulator;
  double previous_lengthscale = 1.0;

  const long burn = static_cast<long>(config.burn_in_fraction *
                                      static_cast<double>(config.iterations));
  const Eigen::Index n_out = std::min<Eigen::Index>(
      config.n_out, std::max<long>(config.iterations - burn, 1));
  Matrix output(n_out, d);
  Eigen::Index written = 0;
  const long kept = std::max<long>(config.iterations - burn, 1);

  auto refit_emulator = [&](long t) {
    const Eigen::Index budget = config.emulator_anchors;
    const auto available = static_cast<Eigen::Index>(history.size());
    const Eigen::Index take = std::min(budget, available);
    Matrix anchors(take, d);
    Rng pick = substream(config.seed, static_cast<std::uint64_t>(t), 0, StreamId::kEmulator);
    if (available <= budget) {
      for (Eigen::Index i = 0; i < take; ++i)
        anchors.row(i) = history[static_cast<std::size_t>(i)].transpose();
    } else {
      std::uniform_int_distribution<Eigen::Index> uni(0, available - 1);
      for (Eigen::Index i = 0; i < take; ++i)
        anchors.row(i) = history[static_cast<std::size_t>(uni(pick))].transpose();
    }
    CovarianceEmulatorConfig cfg;
    cfg.max_anchors = budget;
    cfg.scale_nu2 = nu2;
    cfg.exploration_gamma2 = config.gamma2;
    cfg.fallback_lengthscale = previous_lengthscale;
    try {
      emulator = std::make_unique<CovarianceEmulator>(
          fit_covariance_emulator(anchors, Vector::Ones(take), cfg, pick));
      previous_lengthscale = emulator->lengthscale();
    } catch (const ArgumentError&) {
      // too little history yet; keep walking isotropically
    }
  };

  for (long t = 1; t <= config.iterations; ++t) {
    GaussianDistribution forward;
    const bool kernel_ready =
        config.proposal == McmcConfig::Proposal::kKernelEmulator && emulator;
    if (kernel_ready) {
      emulator->set_scale_nu2(nu2 * emulator->effective_anchor_count());
      forward = GaussianDistribution(x, emulator->proposal_covariance(x));
    } else if (config.proposal == McmcConfig::Proposal::kAdaptiveGlobal && hist_n > 2 * d) {
      Matrix cov = hist_m2 / static_cast<double>(hist_n);
      cov *= nu2;
      cov.diagonal().array() += config.gamma2;
      forward = GaussianDistribution(x, cov);
    } else {
      forward = GaussianDistribution::isotropic(x, nu2);
    }

    const Vector proposed = forward.sample(rng);
    const double lq_forward = forward.log_density(proposed);
    double lq_backward;
    if (kernel_ready) {
      lq_backward =
          GaussianDistribution(proposed, emulator->proposal_covariance(proposed))
              .log_density(x);
    } else {
      lq_backward = lq_forward;  // symmetric proposal
    }
    const double lp_proposed = target.log_density(proposed, rng);
    double alpha = 0.0;
    const double log_ratio = (lp_proposed - lp) + (lq_backward - lq_forward);
    if (!std::isnan(log_ratio)) alpha = std::min(1.0, std::exp(log_ratio));
    if (draw_uniform(rng) < alpha) {
      x = proposed;
      lp = lp_proposed;
    }
    nu2 = adapt_scale(nu2, alpha, config.lambda0 / std::sqrt(static_cast<double>(t)),
                      config.alpha_opt);

    // history updates
    ++hist_n;
    const Vector delta = x - hist_mean;
    hist_mean += delta / static_cast<double>(hist_n);
    hist_m2.noalias() += delta * (x - hist_mean).transpose();
    if (config.proposal == McmcConfig::Proposal::kKernelEmulator) {
      if (t % 10 == 0) history.push_back(x);
      if (t % config.refit_interval == 0) refit_emulator(t);
    }

    if (t > burn) {
      const long since = t - burn;
      const Eigen::Index slot = static_cast<Eigen::Index>(
          (static_cast<long long>(since) - 1) * n_out / kept);
      if (slot >= written && slot < n_out) {
        output.row(slot) = x.transpose();
        written = slot + 1;
      }
    }
  }
  for (Eigen::Index i = written; i < n_out; ++i) output.row(i) = x.transpose();
  return output;
}

/// Pooled output of several independently seeded chains initialized from the
/// given distribution (covering multiple modes when the initializer does).
inline Matrix multi_start_mcmc(const TargetDensity& target,
                               const GaussianDistribution& initial, int n_chains,
                               const McmcConfig& base_config) {
  if (n_chains < 1) throw ConfigError("multi_start_mcmc: need at least one chain");
  const Eigen::Index per_chain = base_config.n_out;
  Matrix pooled(per_chain * n_chains, target.dim());
  for (int c = 0; c < n_chains; ++c) {
    McmcConfig cfg = base_config;
    cfg.seed = detail::splitmix64(base_config.seed + 0x9e3779b97f4a7c15ULL *
                                                         static_cast<std::uint64_t>(c + 1));
    pooled.middleRows(per_chain * c, per_chain) = run_mcmc_chain(target, initial, cfg);
  }
  return pooled;
}

/// Random row subset without replacement (benchmark down-sampling).
inline Matrix downsample_rows(const Matrix& samples, Eigen::Index count, Rng& rng) {
  const Eigen::Index n = samples.rows();
  if (count >= n) return samples;
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  for (Eigen::Index i = 0; i < count; ++i) {
    std::uniform_int_distribution<Eigen::Index> uni(i, n - 1);
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(uni(rng))]);
  }
  Matrix out(count, samples.cols());
  for (Eigen::Index i = 0; i < count; ++i)
    out.row(i) = samples.row(idx[static_cast<std::size_t>(i)]);
  return out;
}

}  // namespace ksmc

#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ksmc/common.hpp"
#include "ksmc/emulators.hpp"
#include "ksmc/gaussian.hpp"
#include "ksmc/particles.hpp"
#include "ksmc/proposals.hpp"
#include "ksmc/rng.hpp"
#include "ksmc/targets.hpp"

namespace ksmc {

enum class Algorithm { kRwsmc, kAsmc, kKasmc, kRwPmc, kGris, kKgris };

inline bool is_mh_branch(Algorithm a) {
  return a == Algorithm::kRwsmc || a == Algorithm::kAsmc || a == Algorithm::kKasmc;
}
inline bool is_pmc_branch(Algorithm a) { return !is_mh_branch(a); }

inline std::string algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::kRwsmc: return "RWSMC";
    case Algorithm::kAsmc: return "ASMC";
    case Algorithm::kKasmc: return "KASMC";
    case Algorithm::kRwPmc: return "RW-PMC";
    case Algorithm::kGris: return "GRIS";
    case Algorithm::kKgris: return "KGRIS";
  }
  return "?";
}

inline std::optional<Algorithm> parse_algorithm(const std::string& name) {
  for (Algorithm a : {Algorithm::kRwsmc, Algorithm::kAsmc, Algorithm::kKasmc,
                      Algorithm::kRwPmc, Algorithm::kGris, Algorithm::kKgris})
    if (algorithm_name(a) == name) return a;
  return std::nullopt;
}

enum class BridgeKind { kGeometric, kMixture, kPmcStatic };

/// Sequence of inverse temperatures rho_1..rho_T defining the incremental
/// targets: geometric pi_t ~ pi_0^(1-rho) pi^rho, mixture
/// pi_t ~ (1-rho) pi_0 + rho pi, or the PMC-static sequence pi_t = pi.
struct BridgeSchedule {
  BridgeKind kind = BridgeKind::kGeometric;
  Vector rho;

  static BridgeSchedule linear(BridgeKind kind, int n_steps) {
    BridgeSchedule s;
    s.kind = kind;
    s.rho.resize(n_steps);
    for (int t = 1; t <= n_steps; ++t)
      s.rho[t - 1] = (kind == BridgeKind::kPmcStatic)
                         ? 1.0
                         : static_cast<double>(t) / static_cast<double>(n_steps);
    return s;
  }

  void validate() const {
    if (rho.size() == 0) throw ConfigError("bridge schedule is empty");
    double prev = 0.0;
    for (Eigen::Index t = 0; t < rho.size(); ++t) {
      if (rho[t] < 0.0 || rho[t] > 1.0)
        throw ConfigError("bridge schedule: rho out of [0, 1]");
      if (rho[t] < prev) throw ConfigError("bridge schedule: rho must be nondecreasing");
      prev = rho[t];
    }
    if (rho[rho.size() - 1] != 1.0)
      throw ConfigError("bridge schedule: final rho must be exactly 1");
  }

  /// Combines cached initial/final log-densities into log pi_t.
  double combine(double rho_t, double lp_init, double lp_target) const {
    if (rho_t <= 0.0) return lp_init;
    if (rho_t >= 1.0) return lp_target;
    if (kind == BridgeKind::kMixture) {
      const double a = std::log1p(-rho_t) + lp_init;
      const double b = std::log(rho_t) + lp_target;
      const double m = std::max(a, b);
      if (!std::isfinite(m)) return kNegInf;
      return m + std::log(std::exp(a - m) + std::exp(b - m));
    }
    if (lp_init == kNegInf || lp_target == kNegInf) return kNegInf;
    return (1.0 - rho_t) * lp_init + rho_t * lp_target;
  }
};

/// Learning-rate schedule for the acceptance-rate driven scale adaptation:
/// fixed lambda or the diminishing lambda_t = value / sqrt(t).
struct LambdaSchedule {
  enum class Kind { kFixed, kInvSqrt };
  Kind kind = Kind::kFixed;
  double value = 0.1;

  double at(int t) const {
    return kind == Kind::kFixed ? value : value / std::sqrt(static_cast<double>(t));
  }
};

/// nu^2_{t+1} = max(nu^2_t + lambda_t (alpha_hat - alpha_opt), floor).
inline double adapt_scale(double nu2, double alpha_hat, double lambda_t,
                          double alpha_opt, double floor = 1e-8) {
  return std::max(nu2 + lambda_t * (alpha_hat - alpha_opt), floor);
}

/// logZ = logZ_0 + sum of per-iteration log mean incremental weights.
inline double estimate_evidence(const std::vector<double>& log_increments,
                                double log_z0 = 0.0) {
  double acc = log_z0;
  for (double inc : log_increments) acc += inc;
  return acc;
}

/// Applies the incremental-weight update logw += logpi_next - logpi_prev and
/// renormalizes. Returns the log evidence increment
/// log sum_i w_i exp(delta_i) computed against the normalized incoming
/// weights. Throws when every particle ends up with zero weight.
inline double reweight(ParticleSystem& ps, const Vector& log_pi_prev,
                       const Vector& log_pi_next) {
  if (log_pi_prev.size() != ps.size() || log_pi_next.size() != ps.size())
    throw ArgumentError("reweight: log-density vector size mismatch");
  normalize_log_weights(ps);
  for (Eigen::Index i = 0; i < ps.size(); ++i) {
    double delta = log_pi_next[i] - log_pi_prev[i];
    if (std::isnan(delta)) delta = kNegInf;  // dead particle stays dead
    ps.log_weights[i] += delta;
    if (std::isnan(ps.log_weights[i])) ps.log_weights[i] = kNegInf;
  }
  const double increment = log_sum_exp(ps.log_weights);
  if (!std::isfinite(increment))
    throw NumericalError("particle system died: all weights zero after reweight");
  ps.log_weights.array() -= increment;
  return increment;
}

struct MhSweepResult {
  double alpha_hat = 0.0;
  long long nonfinite_proposals = 0;
};

namespace detail {

/// One Metropolis-Hastings sweep over all particles with cached per-particle
/// initial/target log-densities. eval(x, rng) -> (lp_init, lp_target) for a
/// fresh point; combine(lp_init, lp_target) -> log pi_t. Per-particle
/// substreams make the result independent of the worker count.
template <class EvalFn, class CombineFn, class ProposalFactory>
MhSweepResult mh_sweep(Matrix& locations, std::vector<double>& lp_init,
                       std::vector<double>& lp_target, EvalFn&& eval,
                       CombineFn&& combine, ProposalFactory&& make_proposal,
                       std::uint64_t seed, std::uint64_t iteration, int threads) {
  const Eigen::Index n = locations.rows();
  std::vector<double> alphas(static_cast<std::size_t>(n), 0.0);
  std::vector<long long> nonfinite(static_cast<std::size_t>(n), 0);

  parallel_for(static_cast<std::size_t>(n), threads, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      const auto idx = static_cast<Eigen::Index>(i);
      Rng rng = substream(seed, iteration, i, StreamId::kMove);
      const Vector x = locations.row(idx).transpose();
      const auto forward = make_proposal(x);
      const Vector proposed = forward.sample(rng);
      const double lq_forward = forward.log_density(proposed);
      const double lq_backward = make_proposal(proposed).log_density(x);

      const auto [lp0_new, lpt_new] = eval(proposed, rng);
      const double log_pi_cur = combine(lp_init[i], lp_target[i]);
      const double log_pi_new = combine(lp0_new, lpt_new);

      double alpha = 0.0;
      if (!std::isfinite(lq_forward) || !std::isfinite(lq_backward)) {
        ++nonfinite[i];
      } else {
        const double log_ratio = (log_pi_new - log_pi_cur) + (lq_backward - lq_forward);
        if (std::isnan(log_ratio))
          alpha = 0.0;  // both densities zero; stay put
        else
          alpha = std::min(1.0, std::exp(log_ratio));
      }
      alphas[i] = alpha;
      if (draw_uniform(rng) < alpha) {
        locations.row(idx) = proposed.transpose();
        lp_init[i] = lp0_new;
        lp_target[i] = lpt_new;
      }
    }
  });

  MhSweepResult result;
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    result.alpha_hat += alphas[i];
    result.nonfinite_proposals += nonfinite[i];
  }
  result.alpha_hat /= static_cast<double>(n);
  return result;
}

}  // namespace detail

/// MH rejuvenation of an (equally weighted) system targeting log_pi. Each
/// particle is proposed once from make_proposal(x) and accepted with the
/// Hastings-corrected probability; the returned alpha_hat is the
/// Rao-Blackwellized mean of the per-particle acceptance probabilities.
template <class LogPiFn, class ProposalFactory>
MhSweepResult mh_rejuvenate(ParticleSystem& ps, LogPiFn&& log_pi,
                            ProposalFactory&& make_proposal, Rng& rng,
                            int threads = 1) {
  const Eigen::Index n = ps.size();
  std::vector<double> lp_init(static_cast<std::size_t>(n), 0.0);
  std::vector<double> lp_target(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i)
    lp_target[static_cast<std::size_t>(i)] = log_pi(ps.locations.row(i).transpose());
  auto eval = [&log_pi](const Vector& x, Rng&) {
    return std::pair<double, double>(0.0, log_pi(x));
  };
  auto combine = [](double, double lpt) { return lpt; };
  const std::uint64_t seed = rng();
  return detail::mh_sweep(ps.locations, lp_init, lp_target, eval, combine,
                          make_proposal, seed, 0, threads);
}

struct PmcStepResult {
  /// log of the self-normalized evidence estimate (1/N) sum_i w_i from the
  /// raw deterministic-mixture weights.
  double log_evidence_estimate = kNegInf;
};

/// Population Monte Carlo step with deterministic-mixture weighting: one
/// stratified draw per anchor component, weighted against the full equally
/// weighted mixture density.
template <class LogPiFn, class ProposalFactory>
PmcStepResult pmc_step(ParticleSystem& ps, LogPiFn&& log_pi,
                       ProposalFactory&& make_proposal, Rng& rng,
                       int threads = 1) {
  const Eigen::Index n = ps.size();
  std::vector<GaussianDistribution> components;
  components.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i)
    components.push_back(make_proposal(ps.locations.row(i).transpose()));

  Matrix drawn(n, ps.dim());
  Vector raw_log_w(n);
  const std::uint64_t seed = rng();
  const double log_n = std::log(static_cast<double>(n));

  parallel_for(static_cast<std::size_t>(n), threads, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      const auto idx = static_cast<Eigen::Index>(i);
      Rng prng = substream(seed, 0, i, StreamId::kMove);
      const Vector x = components[i].sample(prng);
      Vector comp_lp(n);
      for (Eigen::Index j = 0; j < n; ++j)
        comp_lp[j] = components[static_cast<std::size_t>(j)].log_density(x);
      const double log_mix = log_sum_exp(comp_lp) - log_n;
      double lw = log_pi(x, prng) - log_mix;
      if (std::isnan(lw) || !std::isfinite(log_mix)) lw = kNegInf;
      drawn.row(idx) = x.transpose();
      raw_log_w[idx] = lw;
    }
  });

  PmcStepResult result;
  result.log_evidence_estimate = log_mean_exp(raw_log_w);
  ps.locations = std::move(drawn);
  ps.log_weights = raw_log_w;
  normalize_log_weights(ps);
  return result;
}

/// Everything one sampler run needs to know. Zero-valued nu0_sq / gamma2
/// pick the documented defaults at run time (2.38^2/d and 0.01).
struct SamplerConfig {
  Algorithm algorithm = Algorithm::kRwsmc;
  Eigen::Index n_particles = 1000;
  int n_steps = 20;
  double nu0_sq = 0.0;    // 0 -> 2.38^2 / d
  double gamma2 = 0.01;   // exploration noise variance
  double drift_delta = 0.1;
  LambdaSchedule lambda;
  double alpha_opt = 0.234;
  double ess_threshold = 0.5;  // resample when ESS < threshold * N
  bool resample_every_iteration = false;
  ResampleScheme resample_scheme = ResampleScheme::kSystematic;
  BridgeKind bridge = BridgeKind::kGeometric;
  std::optional<Vector> custom_rho;  // overrides the linear schedule

  // emulator options
  Eigen::Index emulator_anchors = 500;
  Eigen::Index feature_count = 300;
  std::optional<double> gradient_ridge;     // nullopt -> relative default
  bool accumulate_gradient_batches = true;  // KGRIS online accumulation
  bool fit_on_resampled = false;            // default: weighted pre-resample fit
  double drift_clip_factor = 10.0;          // c_max = factor * sqrt(tr Sigma_t); 0 = off

  std::uint64_t seed = 0;
  int threads = 1;
  bool record_timing = true;

  void validate(Eigen::Index dim) const {
    if (n_particles < 1) throw ConfigError("n_particles must be >= 1");
    if (n_steps < 1) throw ConfigError("n_steps must be >= 1");
    if (nu0_sq < 0.0) throw ConfigError("nu0_sq must be >= 0");
    if (gamma2 < 0.0) throw ConfigError("gamma2 must be >= 0");
    if (!(alpha_opt > 0.0 && alpha_opt < 1.0))
      throw ConfigError("alpha_opt must lie in (0, 1)");
    if (ess_threshold < 0.0 || ess_threshold > 1.0)
      throw ConfigError("ess_threshold must lie in [0, 1]");
    if (emulator_anchors < 1) throw ConfigError("emulator_anchors must be >= 1");
    if (feature_count < 1) throw ConfigError("feature_count must be >= 1");
    if (dim < 1) throw ConfigError("target dimension must be >= 1");
  }

  double initial_nu2(Eigen::Index dim) const {
    return nu0_sq > 0.0 ? nu0_sq : 2.38 * 2.38 / static_cast<double>(dim);
  }

  BridgeSchedule bridge_schedule() const {
    BridgeSchedule s;
    if (custom_rho) {
      s.kind = bridge;
      s.rho = *custom_rho;
    } else {
      s = BridgeSchedule::linear(bridge, n_steps);
    }
    s.validate();
    return s;
  }
};

struct IterationRecord {
  int t = 0;
  double rho = 0.0;
  double ess = 0.0;
  bool resampled = false;
  double alpha_hat = std::numeric_limits<double>::quiet_NaN();  // NaN on PMC branch
  double nu2 = 0.0;
  double log_evidence_increment = 0.0;
  double elapsed_ms = 0.0;
};

struct RunRecord {
  std::vector<IterationRecord> iterations;
  ParticleSystem final_system;
  double log_evidence = 0.0;
  double wall_time_ms = 0.0;
  long long nonfinite_proposals = 0;

  std::vector<double> log_evidence_increments() const {
    std::vector<double> inc;
    inc.reserve(iterations.size());
    for (const auto& it : iterations) inc.push_back(it.log_evidence_increment);
    return inc;
  }
};

/// Runs one SMC/PMC sampler end to end: init from pi_0, then per iteration
/// reweight -> ESS check -> emulator fit -> (resample) -> rejuvenate or
/// mixture-importance step -> scale adaptation. Deterministic given
/// config.seed, for any thread count.
inline RunRecord run(const SamplerConfig& config, const TargetDensity& target,
                     const GaussianDistribution& initial,
                     const std::function<void(int, const ParticleSystem&)>& observer = {}) {
  const Eigen::Index d = target.dim();
  config.validate(d);
  if (initial.dim() != d)
    throw ConfigError("initial distribution dimension does not match the target");
  if (config.algorithm == Algorithm::kGris && !target.has_gradient())
    throw ConfigError("GRIS requires a target with exact gradients");

  const auto t_start = std::chrono::steady_clock::now();
  const BridgeSchedule schedule = config.bridge_schedule();
  const Eigen::Index n = config.n_particles;
  const std::uint64_t seed = config.seed;

  ParticleSystem ps;
  ps.locations.resize(n, d);
  ps.log_weights = Vector::Constant(n, -std::log(static_cast<double>(n)));
  std::vector<double> lp_init(static_cast<std::size_t>(n));
  std::vector<double> lp_target(static_cast<std::size_t>(n));

  parallel_for(static_cast<std::size_t>(n), config.threads,
               [&](std::size_t lo, std::size_t hi) {
                 for (std::size_t i = lo; i < hi; ++i) {
                   Rng rng = substream(seed, 0, i, StreamId::kInit);
                   const Vector x = initial.sample(rng);
                   ps.locations.row(static_cast<Eigen::Index>(i)) = x.transpose();
                   lp_init[i] = initial.log_density(x);
                   lp_target[i] = target.log_density(x, rng);
                 }
               });

  double nu2 = config.initial_nu2(d);
  double previous_lengthscale = 1.0;
  std::unique_ptr<GradientEmulator> gradient_emulator;

  RunRecord record;
  record.iterations.reserve(static_cast<std::size_t>(config.n_steps));
  double rho_prev = 0.0;
  std::vector<double> increments;

  for (int t = 1; t <= config.n_steps; ++t) {
    const auto iter_start = std::chrono::steady_clock::now();
    const double rho_t = schedule.rho[t - 1];
    IterationRecord rec;
    rec.t = t;
    rec.rho = rho_t;
    rec.nu2 = nu2;
    try {
      // Reweight against the new incremental target using cached values.
      Vector lp_prev(n), lp_next(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto k = static_cast<std::size_t>(i);
        lp_prev[i] = schedule.combine(rho_prev, lp_init[k], lp_target[k]);
        lp_next[i] = schedule.combine(rho_t, lp_init[k], lp_target[k]);
      }
      rec.log_evidence_increment = reweight(ps, lp_prev, lp_next);
      rec.ess = ess(ps);

      const Vector weights = natural_weights(ps);

      // Fit stage: global covariance and/or kernel emulators, by default on
      // the weighted pre-resample system.
      Matrix sigma_t;
      std::shared_ptr<const CovarianceEmulator> cov_emulator;
      const bool needs_sigma = config.algorithm == Algorithm::kAsmc ||
                               is_pmc_branch(config.algorithm);
      if (needs_sigma) sigma_t = weighted_covariance(ps.locations, weights);
      if (config.algorithm == Algorithm::kKasmc && !config.fit_on_resampled) {
        CovarianceEmulatorConfig emu_cfg;
        emu_cfg.max_anchors = config.emulator_anchors;
        emu_cfg.scale_nu2 = nu2;
        emu_cfg.exploration_gamma2 = config.gamma2;
        emu_cfg.fallback_lengthscale = previous_lengthscale;
        Rng emu_rng = substream(seed, static_cast<std::uint64_t>(t), 0, StreamId::kEmulator);
        auto fitted = std::make_shared<CovarianceEmulator>(
            fit_covariance_emulator(ps.locations, weights, emu_cfg, emu_rng));
        // nu^2 carries the centering normalization (see effective_anchor_count)
        fitted->set_scale_nu2(nu2 * fitted->effective_anchor_count());
        cov_emulator = fitted;
        previous_lengthscale = cov_emulator->lengthscale();
      }
      if (config.algorithm == Algorithm::kKgris) {
        if (!gradient_emulator || !config.accumulate_gradient_batches) {
          const double ls = [&] {
            try {
              return median_heuristic(ps.locations);
            } catch (const NumericalError&) {
              return previous_lengthscale;
            }
          }();
          previous_lengthscale = ls > 0.0 ? ls : previous_lengthscale;
          Rng map_rng =
              substream(seed, static_cast<std::uint64_t>(t), 0, StreamId::kFeatureMap);
          gradient_emulator = std::make_unique<GradientEmulator>(
              sample_feature_map(d, config.feature_count,
                                 ls > 0.0 ? ls : previous_lengthscale, map_rng),
              config.gradient_ridge);
        }
        Matrix fit_x = ps.locations;
        Vector fit_w = weights;
        if (n > config.emulator_anchors) {
          Rng sub_rng =
              substream(seed, static_cast<std::uint64_t>(t), 1, StreamId::kEmulator);
          const auto idx =
              detail::sample_without_replacement(weights, config.emulator_anchors, sub_rng);
          fit_x.resize(static_cast<Eigen::Index>(idx.size()), d);
          for (std::size_t k = 0; k < idx.size(); ++k)
            fit_x.row(static_cast<Eigen::Index>(k)) = ps.locations.row(idx[k]);
          fit_w = Vector::Ones(fit_x.rows());
        }
        gradient_emulator->accumulate(fit_x, fit_w);
        gradient_emulator->refit();
      }

      // Resample: always on the PMC branch (the mixture anchors must be
      // equally weighted), conditionally on the MH branch.
      const bool due = is_pmc_branch(config.algorithm) ||
                       config.resample_every_iteration ||
                       rec.ess < config.ess_threshold * static_cast<double>(n);
      if (due) {
        Rng res_rng = substream(seed, static_cast<std::uint64_t>(t), 0, StreamId::kResample);
        const auto idx = resample_indices(natural_weights(ps), config.resample_scheme, res_rng);
        Matrix new_x(n, d);
        std::vector<double> new_lp0(static_cast<std::size_t>(n)),
            new_lpt(static_cast<std::size_t>(n));
        for (Eigen::Index k = 0; k < n; ++k) {
          const auto src = idx[static_cast<std::size_t>(k)];
          new_x.row(k) = ps.locations.row(src);
          new_lp0[static_cast<std::size_t>(k)] = lp_init[static_cast<std::size_t>(src)];
          new_lpt[static_cast<std::size_t>(k)] = lp_target[static_cast<std::size_t>(src)];
        }
        ps.locations = std::move(new_x);
        ps.log_weights = Vector::Constant(n, -std::log(static_cast<double>(n)));
        lp_init = std::move(new_lp0);
        lp_target = std::move(new_lpt);
        rec.resampled = true;
      }

      if (config.algorithm == Algorithm::kKasmc && config.fit_on_resampled) {
        CovarianceEmulatorConfig emu_cfg;
        emu_cfg.max_anchors = config.emulator_anchors;
        emu_cfg.scale_nu2 = nu2;
        emu_cfg.exploration_gamma2 = config.gamma2;
        emu_cfg.fallback_lengthscale = previous_lengthscale;
        Rng emu_rng = substream(seed, static_cast<std::uint64_t>(t), 0, StreamId::kEmulator);
        auto fitted = std::make_shared<CovarianceEmulator>(fit_covariance_emulator(
            ps.locations, natural_weights(ps), emu_cfg, emu_rng));
        fitted->set_scale_nu2(nu2 * fitted->effective_anchor_count());
        cov_emulator = fitted;
        previous_lengthscale = cov_emulator->lengthscale();
      }

      auto eval_point = [&](const Vector& x, Rng& rng) {
        return std::pair<double, double>(initial.log_density(x),
                                         target.log_density(x, rng));
      };
      auto combine_t = [&](double lp0, double lpt) {
        return schedule.combine(rho_t, lp0, lpt);
      };

      if (is_mh_branch(config.algorithm)) {
        MhSweepResult sweep;
        if (config.algorithm == Algorithm::kRwsmc) {
          sweep = detail::mh_sweep(ps.locations, lp_init, lp_target, eval_point,
                                   combine_t, RandomWalkProposal(nu2), seed,
                                   static_cast<std::uint64_t>(t), config.threads);
        } else if (config.algorithm == Algorithm::kAsmc) {
          const Matrix asmc_sigma =
              config.fit_on_resampled
                  ? weighted_covariance(ps.locations, natural_weights(ps))
                  : sigma_t;
          sweep = detail::mh_sweep(ps.locations, lp_init, lp_target, eval_point,
                                   combine_t, AsmcProposal(asmc_sigma, nu2, config.gamma2),
                                   seed, static_cast<std::uint64_t>(t), config.threads);
        } else {
          sweep = detail::mh_sweep(ps.locations, lp_init, lp_target, eval_point,
                                   combine_t, KasmcProposal(cov_emulator), seed,
                                   static_cast<std::uint64_t>(t), config.threads);
        }
        rec.alpha_hat = sweep.alpha_hat;
        record.nonfinite_proposals += sweep.nonfinite_proposals;
        nu2 = adapt_scale(nu2, rec.alpha_hat, config.lambda.at(t), config.alpha_opt);
      } else {
        const double clip =
            config.drift_clip_factor > 0.0
                ? config.drift_clip_factor * std::sqrt(std::max(sigma_t.trace(), 0.0))
                : 0.0;
        auto run_pmc = [&](auto&& proposal_factory) {
          Matrix drawn(n, d);
          Vector raw_log_w(n);
          std::vector<double> new_lp0(static_cast<std::size_t>(n)),
              new_lpt(static_cast<std::size_t>(n));
          std::vector<GaussianDistribution> components;
          components.reserve(static_cast<std::size_t>(n));
          for (Eigen::Index i = 0; i < n; ++i)
            components.push_back(proposal_factory(ps.locations.row(i).transpose()));
          const double log_n = std::log(static_cast<double>(n));
          parallel_for(static_cast<std::size_t>(n), config.threads,
                       [&](std::size_t lo, std::size_t hi) {
                         for (std::size_t i = lo; i < hi; ++i) {
                           const auto idx = static_cast<Eigen::Index>(i);
                           Rng prng = substream(seed, static_cast<std::uint64_t>(t), i,
                                                StreamId::kMove);
                           const Vector x = components[i].sample(prng);
                           Vector comp_lp(n);
                           for (Eigen::Index j = 0; j < n; ++j)
                             comp_lp[j] =
                                 components[static_cast<std::size_t>(j)].log_density(x);
                           const double log_mix = log_sum_exp(comp_lp) - log_n;
                           const auto [lp0x, lptx] = eval_point(x, prng);
                           double lw = combine_t(lp0x, lptx) - log_mix;
                           if (std::isnan(lw) || !std::isfinite(log_mix)) lw = kNegInf;
                           drawn.row(idx) = x.transpose();
                           raw_log_w[idx] = lw;
                           new_lp0[i] = lp0x;
                           new_lpt[i] = lptx;
                         }
                       });
          ps.locations = std::move(drawn);
          ps.log_weights = raw_log_w;
          lp_init = std::move(new_lp0);
          lp_target = std::move(new_lpt);
          rec.log_evidence_increment = log_mean_exp(raw_log_w);
          normalize_log_weights(ps);
        };

        if (config.algorithm == Algorithm::kRwPmc) {
          run_pmc(DriftProposal([](const Vector& x) { return Vector::Zero(x.size()); },
                                0.0, sigma_t, nu2));
        } else if (config.algorithm == Algorithm::kGris) {
          run_pmc(DriftProposal(
              [&target](const Vector& x) { return target.log_density_grad(x); },
              config.drift_delta, sigma_t, nu2, clip));
        } else {
          run_pmc(DriftProposal(
              [emu = gradient_emulator.get()](const Vector& x) {
                return emu->log_density_gradient(x);
              },
              config.drift_delta, sigma_t, nu2, clip));
        }
      }
    } catch (const NumericalError& err) {
      throw NumericalError("iteration " + std::to_string(t) + ": " + err.what());
    }

    rho_prev = rho_t;
    if (config.record_timing) {
      rec.elapsed_ms = std::chrono::duration<double, std::milli>(
                           std::chrono::steady_clock::now() - iter_start)
                           .count();
    }
    record.iterations.push_back(rec);
    increments.push_back(rec.log_evidence_increment);
    if (observer) observer(t, ps);
  }

  record.final_system = std::move(ps);
  record.log_evidence = is_pmc_branch(config.algorithm)
                            ? increments.back()
                            : estimate_evidence(increments, 0.0);
  if (config.record_timing) {
    record.wall_time_ms = std::chrono::duration<double, std::milli>(
                              std::chrono::steady_clock::now() - t_start)
                              .count();
  }
  return record;
}

}  // namespace ksmc

#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ksmc/common.hpp"
#include "ksmc/config.hpp"
#include "ksmc/csv.hpp"
#include "ksmc/diagnostics.hpp"
#include "ksmc/mcmc.hpp"
#include "ksmc/smc.hpp"

namespace ksmc {

inline constexpr const char* kSoftwareVersion = "0.1.0";

/// Exact sampler for targets that provide one (banana, gaussian, mixture;
/// the pseudo-marginal wrapper defers to its inner target).
inline std::optional<Matrix> exact_target_sample(const TargetDensity& target,
                                                 Eigen::Index n, Rng& rng) {
  const TargetDensity* t = &target;
  if (const auto* noisy = dynamic_cast<const NoisyTargetWrapper*>(t)) t = &noisy->inner();
  if (const auto* banana = dynamic_cast<const BananaTarget*>(t))
    return banana->sample_matrix(n, rng);
  if (const auto* gauss = dynamic_cast<const GaussianTarget*>(t)) {
    Matrix out(n, gauss->dim());
    for (Eigen::Index i = 0; i < n; ++i) out.row(i) = gauss->sample(rng).transpose();
    return out;
  }
  if (const auto* mix = dynamic_cast<const GaussianMixtureTarget*>(t)) {
    Matrix out(n, mix->dim());
    for (Eigen::Index i = 0; i < n; ++i) out.row(i) = mix->sample(rng).transpose();
    return out;
  }
  return std::nullopt;
}

/// Builds the reference sample named by the spec (or nothing).
inline std::optional<Matrix> build_reference(const ReferenceSpec& spec,
                                             const TargetDensity& target,
                                             const GaussianDistribution& initial) {
  if (spec.kind == ReferenceSpec::Kind::kNone) return std::nullopt;
  Rng rng = substream(spec.seed, 0, 0, StreamId::kReference);
  if (spec.kind == ReferenceSpec::Kind::kExactTargetSample) {
    auto sample = exact_target_sample(target, spec.n, rng);
    if (!sample)
      throw ConfigError("reference: target has no exact sampler; use mcmc_benchmark");
    return sample;
  }
  McmcConfig cfg;
  cfg.proposal = McmcConfig::Proposal::kAdaptiveGlobal;
  cfg.iterations = spec.iterations;
  cfg.n_out = std::max<Eigen::Index>(spec.downsample, 500);
  cfg.seed = spec.seed;
  Matrix pooled = multi_start_mcmc(target, initial, spec.chains, cfg);
  return downsample_rows(pooled, spec.downsample, rng);
}

struct RunOutput {
  std::string run_id;
  std::string variant;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string failure;
  RunRecord record;
  std::vector<std::pair<std::string, double>> metrics;  // name -> value
};

namespace detail {

struct PooledMoments {
  Vector mean_sum;
  Matrix outer_sum;
  double batches = 0.0;

  void add(const ParticleSystem& ps) {
    ParticleSystem copy = ps;
    normalize_log_weights(copy);
    const Vector w = natural_weights(copy);
    const Vector mu = copy.locations.transpose() * w;
    Matrix outer = copy.locations.transpose() * w.asDiagonal() * copy.locations;
    if (batches == 0.0) {
      mean_sum = mu;
      outer_sum = outer;
    } else {
      mean_sum += mu;
      outer_sum += outer;
    }
    batches += 1.0;
  }

  Matrix covariance() const {
    const Vector mean = mean_sum / batches;
    Matrix second = outer_sum / batches;
    Matrix cov = second - mean * mean.transpose();
    return 0.5 * (cov + cov.transpose());
  }
};

}  // namespace detail

/// Executes one (variant, seed) run and computes its metrics.
inline RunOutput execute_run(const ExperimentConfig& cfg, const VariantSpec& variant,
                             std::uint64_t seed,
                             const std::shared_ptr<const TargetDensity>& target,
                             const GaussianDistribution& initial,
                             const std::optional<Matrix>& reference,
                             const std::vector<Vector>& reference_modes) {
  RunOutput out;
  out.variant = variant.label;
  out.seed = seed;
  out.run_id = variant.label + "-s" + std::to_string(seed);

  const bool want_series =
      std::find(cfg.metrics.begin(), cfg.metrics.end(), "mmd_poly3_series") !=
      cfg.metrics.end();
  const bool want_pooled =
      std::find(cfg.metrics.begin(), cfg.metrics.end(), "cov_rmse_pooled") !=
      cfg.metrics.end();

  SamplerConfig sampler = variant.sampler;
  sampler.seed = seed;
  sampler.record_timing = cfg.record_timing;

  std::vector<ParticleSystem> series_systems;
  detail::PooledMoments pooled;
  const int pool_from =
      sampler.n_steps - static_cast<int>(cfg.pooled_fraction * sampler.n_steps) + 1;

  std::function<void(int, const ParticleSystem&)> observer;
  if (want_series || want_pooled) {
    observer = [&](int t, const ParticleSystem& ps) {
      if (want_series) series_systems.push_back(ps);
      if (want_pooled && t >= pool_from) pooled.add(ps);
    };
  }

  try {
    out.record = run(sampler, *target, initial, observer);
    out.ok = true;
  } catch (const std::exception& err) {
    out.failure = err.what();
    return out;
  }

  // Metrics. MMD inputs are standardized by the reference sample's scale.
  Matrix series_reference;
  for (const auto& metric : cfg.metrics) {
    if (metric == "log_evidence") {
      out.metrics.emplace_back(metric, out.record.log_evidence);
    } else if (metric == "ess_final") {
      out.metrics.emplace_back(metric, ess(out.record.final_system));
    } else if (metric == "mmd_poly3") {
      if (!reference) throw ConfigError("metric mmd_poly3 requires a reference");
      auto [xs, rs] =
          standardize_by_reference(out.record.final_system.locations, *reference);
      out.metrics.emplace_back(
          metric, mmd(xs, rs, MmdKernel::polynomial3(), MmdEstimator::kBiased).value);
    } else if (metric == "mmd_poly3_series") {
      if (!reference) throw ConfigError("metric mmd_poly3_series requires a reference");
      if (series_reference.size() == 0) {
        Rng cap_rng = substream(cfg.reference.seed, 1, 0, StreamId::kReference);
        series_reference = downsample_rows(*reference, cfg.series_reference_cap, cap_rng);
      }
      for (std::size_t t = 0; t < series_systems.size(); ++t) {
        auto [xs, rs] = standardize_by_reference(series_systems[t].locations,
                                                 series_reference);
        out.metrics.emplace_back(
            metric + "_t" + std::to_string(t + 1),
            mmd(xs, rs, MmdKernel::polynomial3(), MmdEstimator::kBiased).value);
      }
    } else if (metric == "cov_rmse_final" || metric == "cov_rmse_pooled") {
      Matrix truth;
      const TargetDensity* t = target.get();
      if (const auto* noisy = dynamic_cast<const NoisyTargetWrapper*>(t))
        t = &noisy->inner();
      if (const auto* banana = dynamic_cast<const BananaTarget*>(t)) {
        truth = banana->exact_covariance();
      } else if (reference) {
        truth = weighted_covariance(*reference,
                                    Vector::Ones(reference->rows()));
      } else {
        throw ConfigError("metric " + metric + " needs a banana target or a reference");
      }
      if (metric == "cov_rmse_final") {
        const Moments m = weighted_moments(out.record.final_system);
        out.metrics.emplace_back(metric, covariance_rmse(m.covariance, truth));
      } else {
        out.metrics.emplace_back(metric, covariance_rmse(pooled.covariance(), truth));
      }
    } else if (metric == "mode_coverage") {
      out.metrics.emplace_back(
          metric, static_cast<double>(mode_coverage(out.record.final_system,
                                                    reference_modes, cfg.mode_radius)));
    }
  }
  return out;
}

struct ExperimentResult {
  int n_runs = 0;
  int n_failures = 0;
  std::string output_dir;
  std::vector<RunOutput> runs;
};

/// Runs the full (variant x seed) grid, writes runs/particles/metrics CSVs,
/// the per-variant aggregate CSV, and a manifest. Individual run failures are
/// recorded and the remaining runs still execute.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  fs::create_directories(cfg.output_dir);

  const auto target = build_target(cfg.target);
  const GaussianDistribution initial = build_initial(cfg.init, target->dim());
  const std::optional<Matrix> reference = build_reference(cfg.reference, *target, initial);

  std::vector<Vector> reference_modes;
  const bool want_modes =
      std::find(cfg.metrics.begin(), cfg.metrics.end(), "mode_coverage") !=
      cfg.metrics.end();
  if (want_modes) {
    if (!reference) throw ConfigError("metric mode_coverage requires a reference");
    Vector lp(reference->rows());
    for (Eigen::Index i = 0; i < reference->rows(); ++i)
      lp[i] = target->is_noisy()
                  ? dynamic_cast<const NoisyTargetWrapper&>(*target).inner().log_density(
                        reference->row(i).transpose())
                  : target->log_density(reference->row(i).transpose());
    reference_modes =
        greedy_modes(*reference, lp, cfg.mode_radius, cfg.mode_min_count);
  }

  // Grid execution; run-level parallelism with deterministic output order.
  std::vector<std::pair<const VariantSpec*, std::uint64_t>> grid;
  for (const auto& variant : cfg.variants)
    for (const auto seed : cfg.seeds) grid.emplace_back(&variant, seed);

  std::vector<RunOutput> outputs(grid.size());
  std::atomic<std::size_t> next{0};
  const int workers = std::max(1, cfg.threads);
  auto worker = [&] {
    while (true) {
      const std::size_t k = next.fetch_add(1);
      if (k >= grid.size()) break;
      outputs[k] = execute_run(cfg, *grid[k].first, grid[k].second, target, initial,
                               reference, reference_modes);
    }
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  // CSV outputs.
  CsvWriter runs_csv({"run_id", "algorithm", "t", "rho", "ess", "resampled",
                      "alpha_hat", "nu2", "log_evidence_increment", "elapsed_ms"});
  CsvWriter particles_csv_header({"run_id", "particle_id", "weight"});
  std::vector<std::string> particle_cols = {"run_id", "particle_id", "weight"};
  for (Eigen::Index j = 0; j < target->dim(); ++j)
    particle_cols.push_back("x_" + std::to_string(j));
  CsvWriter particles_csv(particle_cols);
  CsvWriter metrics_csv({"run_id", "metric", "value", "n_ref", "seed"});
  CsvWriter failures_csv({"run_id", "variant", "seed", "reason"});

  const std::string n_ref =
      reference ? std::to_string(reference->rows()) : "0";
  int failures = 0;
  for (const auto& out : outputs) {
    if (!out.ok) {
      ++failures;
      failures_csv.append({out.run_id, out.variant, std::to_string(out.seed),
                           out.failure});
      continue;
    }
    for (const auto& it : out.record.iterations) {
      runs_csv.append({out.run_id, out.variant, std::to_string(it.t),
                       format_double(it.rho), format_double(it.ess),
                       it.resampled ? "1" : "0", format_double(it.alpha_hat),
                       format_double(it.nu2),
                       format_double(it.log_evidence_increment),
                       format_double(it.elapsed_ms)});
    }
    ParticleSystem final_ps = out.record.final_system;
    normalize_log_weights(final_ps);
    const Vector w = natural_weights(final_ps);
    for (Eigen::Index i = 0; i < final_ps.size(); ++i) {
      std::vector<std::string> row = {out.run_id, std::to_string(i), format_double(w[i])};
      for (Eigen::Index j = 0; j < final_ps.dim(); ++j)
        row.push_back(format_double(final_ps.locations(i, j)));
      particles_csv.append(std::move(row));
    }
    for (const auto& [name, value] : out.metrics)
      metrics_csv.append({out.run_id, name, format_double(value), n_ref,
                          std::to_string(out.seed)});
  }

  // Aggregate: per-variant median/IQR of every metric.
  std::map<std::string, std::map<std::string, std::vector<double>>> by_variant;
  for (const auto& out : outputs)
    if (out.ok)
      for (const auto& [name, value] : out.metrics)
        by_variant[out.variant][name].push_back(value);
  CsvWriter aggregate_csv({"variant", "metric", "median", "q25", "q75", "n_runs"});
  for (const auto& variant : cfg.variants) {
    const auto it = by_variant.find(variant.label);
    if (it == by_variant.end()) continue;
    for (const auto& [name, values] : it->second) {
      const auto s = summarize_quartiles(values);
      aggregate_csv.append({variant.label, name, format_double(s.median),
                            format_double(s.q25), format_double(s.q75),
                            std::to_string(values.size())});
    }
  }

  namespace fs2 = std::filesystem;
  const fs2::path dir(cfg.output_dir);
  runs_csv.write((dir / "runs.csv").string());
  particles_csv.write((dir / "particles.csv").string());
  metrics_csv.write((dir / "metrics.csv").string());
  aggregate_csv.write((dir / "aggregate.csv").string());
  if (failures > 0) failures_csv.write((dir / "failures.csv").string());

  // Manifest: config hash, seed list, software version.
  {
    std::ostringstream canonical;
    canonical << cfg.experiment << '|' << cfg.target.kind << '|' << cfg.target.dim;
    for (const auto& variant : cfg.variants)
      canonical << '|' << variant.label << ':' << algorithm_name(variant.sampler.algorithm)
                << ':' << variant.sampler.n_particles << ':' << variant.sampler.n_steps;
    for (const auto seed : cfg.seeds) canonical << '|' << seed;
    std::uint64_t hash = 1469598103934665603ULL;  // FNV-1a
    for (const char c : canonical.str()) {
      hash ^= static_cast<unsigned char>(c);
      hash *= 1099511628211ULL;
    }
    std::ofstream manifest(dir / "manifest.txt");
    manifest << "experiment: " << cfg.experiment << "\n";
    manifest << "version: " << kSoftwareVersion << "\n";
    manifest << "config_hash: " << std::hex << hash << std::dec << "\n";
    manifest << "seeds:";
    for (const auto seed : cfg.seeds) manifest << " " << seed;
    manifest << "\n";
    manifest << "runs: " << outputs.size() << "\n";
    manifest << "failures: " << failures << "\n";
  }

  ExperimentResult result;
  result.n_runs = static_cast<int>(outputs.size());
  result.n_failures = failures;
  result.output_dir = cfg.output_dir;
  result.runs = std::move(outputs);
  return result;
}

}  // namespace ksmc

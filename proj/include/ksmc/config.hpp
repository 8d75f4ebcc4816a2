#pragma once

#include <cstdint>
#include <fstream>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ksmc/common.hpp"
#include "ksmc/gaussian.hpp"
#include "ksmc/sensor_network.hpp"
#include "ksmc/smc.hpp"
#include "ksmc/targets.hpp"

namespace ksmc {

using Json = nlohmann::json;

/// What the harness compares a run against.
struct ReferenceSpec {
  enum class Kind { kNone, kExactTargetSample, kMcmcBenchmark };
  Kind kind = Kind::kNone;
  Eigen::Index n = 100000;          // exact-sample size
  std::uint64_t seed = 1;
  int chains = 100;                 // mcmc benchmark
  long iterations = 50000;
  Eigen::Index downsample = 100;    // benchmark output size after pooling
};

/// Declarative target description; build_target() materializes it.
struct TargetSpec {
  std::string kind;  // banana | gaussian | gaussian_mixture | sensor
  Eigen::Index dim = 2;
  double banana_b = 0.1;
  double banana_v = 100.0;
  Vector gaussian_mean;
  double gaussian_variance = 1.0;  // isotropic
  double log_scale = 0.0;
  std::vector<double> mixture_weights;
  std::vector<Vector> mixture_means;
  std::vector<double> mixture_variances;
  int sensor_unknowns = 2;
  int sensor_bases = 2;
  double sensor_range = 0.3;
  double sensor_noise_var = 0.02;
  std::uint64_t sensor_dataset_seed = 1;
  std::string sensor_dataset_file;  // wins over generation when nonempty
  double noise_tau2 = 0.0;          // > 0 wraps the target pseudo-marginally
};

struct InitSpec {
  Vector mean;      // empty -> zero vector of the target dim
  double variance = 1.0;
  double mean_fill = 0.0;  // used when mean is empty
};

/// One sampler variant of the experiment grid.
struct VariantSpec {
  std::string label;
  SamplerConfig sampler;
};

struct ExperimentConfig {
  std::string experiment;
  std::string output_dir = "out";
  TargetSpec target;
  InitSpec init;
  ReferenceSpec reference;
  std::vector<std::string> metrics;
  std::vector<std::uint64_t> seeds;
  std::vector<VariantSpec> variants;
  double mode_radius = 0.2;        // mode_coverage metric
  int mode_min_count = 3;          // greedy mode extraction support
  double pooled_fraction = 0.5;    // trailing fraction of iterations pooled
  Eigen::Index series_reference_cap = 20000;  // per-iteration MMD reference cap
  int threads = 1;
  bool record_timing = true;
};

inline std::shared_ptr<const TargetDensity> build_target(const TargetSpec& spec) {
  std::shared_ptr<const TargetDensity> target;
  if (spec.kind == "banana") {
    target = std::make_shared<BananaTarget>(spec.dim, spec.banana_b, spec.banana_v);
  } else if (spec.kind == "gaussian") {
    Vector mean = spec.gaussian_mean.size() ? spec.gaussian_mean : Vector::Zero(spec.dim);
    Matrix cov = spec.gaussian_variance * Matrix::Identity(mean.size(), mean.size());
    target = std::make_shared<GaussianTarget>(mean, cov, spec.log_scale);
  } else if (spec.kind == "gaussian_mixture") {
    std::vector<Matrix> covs;
    for (double v : spec.mixture_variances)
      covs.push_back(v * Matrix::Identity(spec.dim, spec.dim));
    target = std::make_shared<GaussianMixtureTarget>(spec.mixture_weights,
                                                     spec.mixture_means, covs,
                                                     spec.log_scale);
  } else if (spec.kind == "sensor") {
    SensorDataset data = spec.sensor_dataset_file.empty()
                             ? generate_sensor_dataset(spec.sensor_unknowns,
                                                       spec.sensor_bases,
                                                       spec.sensor_range,
                                                       spec.sensor_noise_var,
                                                       spec.sensor_dataset_seed)
                             : load_sensor_dataset(spec.sensor_dataset_file);
    target = std::make_shared<SensorNetworkTarget>(std::move(data));
  } else {
    throw ConfigError("unknown target kind '" + spec.kind + "'");
  }
  if (spec.noise_tau2 > 0.0)
    target = std::make_shared<NoisyTargetWrapper>(target, spec.noise_tau2);
  return target;
}

inline GaussianDistribution build_initial(const InitSpec& spec, Eigen::Index dim) {
  Vector mean = spec.mean.size() ? spec.mean : Vector::Constant(dim, spec.mean_fill);
  if (mean.size() != dim)
    throw ConfigError("init mean dimension does not match the target");
  return GaussianDistribution::isotropic(std::move(mean), spec.variance);
}

namespace detail {

class ConfigReader {
 public:
  explicit ConfigReader(std::vector<std::string>& errors) : errors_(errors) {}

  void check_keys(const Json& obj, const std::string& where,
                  const std::set<std::string>& allowed) {
    if (!obj.is_object()) {
      errors_.push_back(where + ": expected an object");
      return;
    }
    for (const auto& [key, _] : obj.items())
      if (!allowed.count(key))
        errors_.push_back(where + ": unknown key '" + key + "'");
  }

  template <class T>
  void read(const Json& obj, const std::string& where, const std::string& key, T& out) {
    if (!obj.is_object() || !obj.contains(key)) return;
    try {
      out = obj.at(key).get<T>();
    } catch (const Json::exception&) {
      errors_.push_back(where + ": invalid value for '" + key + "'");
    }
  }

  void require(const Json& obj, const std::string& where, const std::string& key) {
    if (!obj.is_object() || !obj.contains(key))
      errors_.push_back(where + ": missing required field '" + key + "'");
  }

  void note(const std::string& msg) { errors_.push_back(msg); }

 private:
  std::vector<std::string>& errors_;
};

inline Vector to_vector(const Json& arr) {
  Vector v(static_cast<Eigen::Index>(arr.size()));
  for (std::size_t i = 0; i < arr.size(); ++i)
    v[static_cast<Eigen::Index>(i)] = arr.at(i).get<double>();
  return v;
}

inline SamplerConfig parse_variant(const Json& obj, const std::string& where,
                                   ConfigReader& reader) {
  SamplerConfig cfg;
  reader.check_keys(obj, where,
                    {"label", "algorithm", "n_particles", "n_steps", "nu0_sq",
                     "gamma2", "drift_delta", "lambda_kind", "lambda_value",
                     "alpha_opt", "ess_threshold", "resample_every_iteration",
                     "resample_scheme", "bridge", "emulator_anchors",
                     "feature_count", "gradient_ridge",
                     "accumulate_gradient_batches", "fit_on_resampled",
                     "drift_clip_factor"});
  reader.require(obj, where, "algorithm");
  if (obj.is_object() && obj.contains("algorithm")) {
    const std::string name = obj.at("algorithm").get<std::string>();
    if (auto a = parse_algorithm(name)) {
      cfg.algorithm = *a;
    } else {
      reader.note("unknown algorithm '" + name + "'");
    }
  }
  long n_particles = cfg.n_particles;
  reader.read(obj, where, "n_particles", n_particles);
  cfg.n_particles = n_particles;
  reader.read(obj, where, "n_steps", cfg.n_steps);
  reader.read(obj, where, "nu0_sq", cfg.nu0_sq);
  reader.read(obj, where, "gamma2", cfg.gamma2);
  reader.read(obj, where, "drift_delta", cfg.drift_delta);
  std::string lambda_kind = "fixed";
  reader.read(obj, where, "lambda_kind", lambda_kind);
  if (lambda_kind == "fixed") {
    cfg.lambda.kind = LambdaSchedule::Kind::kFixed;
  } else if (lambda_kind == "inv_sqrt") {
    cfg.lambda.kind = LambdaSchedule::Kind::kInvSqrt;
  } else {
    reader.note(where + ": lambda_kind must be 'fixed' or 'inv_sqrt'");
  }
  reader.read(obj, where, "lambda_value", cfg.lambda.value);
  reader.read(obj, where, "alpha_opt", cfg.alpha_opt);
  reader.read(obj, where, "ess_threshold", cfg.ess_threshold);
  reader.read(obj, where, "resample_every_iteration", cfg.resample_every_iteration);
  std::string scheme = "systematic";
  reader.read(obj, where, "resample_scheme", scheme);
  if (scheme == "systematic") {
    cfg.resample_scheme = ResampleScheme::kSystematic;
  } else if (scheme == "multinomial") {
    cfg.resample_scheme = ResampleScheme::kMultinomial;
  } else {
    reader.note(where + ": resample_scheme must be 'systematic' or 'multinomial'");
  }
  std::string bridge = is_pmc_branch(cfg.algorithm) ? "pmc-static" : "geometric";
  reader.read(obj, where, "bridge", bridge);
  if (bridge == "geometric") {
    cfg.bridge = BridgeKind::kGeometric;
  } else if (bridge == "mixture") {
    cfg.bridge = BridgeKind::kMixture;
  } else if (bridge == "pmc-static") {
    cfg.bridge = BridgeKind::kPmcStatic;
  } else {
    reader.note(where + ": bridge must be 'geometric', 'mixture' or 'pmc-static'");
  }
  long anchors = cfg.emulator_anchors;
  reader.read(obj, where, "emulator_anchors", anchors);
  cfg.emulator_anchors = anchors;
  long features = cfg.feature_count;
  reader.read(obj, where, "feature_count", features);
  cfg.feature_count = features;
  if (obj.is_object() && obj.contains("gradient_ridge")) {
    double ridge = 0.0;
    reader.read(obj, where, "gradient_ridge", ridge);
    cfg.gradient_ridge = ridge;
  }
  reader.read(obj, where, "accumulate_gradient_batches", cfg.accumulate_gradient_batches);
  reader.read(obj, where, "fit_on_resampled", cfg.fit_on_resampled);
  reader.read(obj, where, "drift_clip_factor", cfg.drift_clip_factor);
  return cfg;
}

inline TargetSpec parse_target(const Json& obj, ConfigReader& reader) {
  TargetSpec spec;
  reader.check_keys(obj, "target",
                    {"kind", "dim", "b", "v", "mean", "variance", "log_scale",
                     "weights", "means", "variances", "S", "B", "R", "sigma2",
                     "dataset_seed", "dataset_file", "noise_tau2"});
  reader.require(obj, "target", "kind");
  if (obj.is_object() && obj.contains("kind")) spec.kind = obj.at("kind").get<std::string>();
  long dim = spec.dim;
  reader.read(obj, "target", "dim", dim);
  spec.dim = dim;
  reader.read(obj, "target", "b", spec.banana_b);
  reader.read(obj, "target", "v", spec.banana_v);
  if (obj.is_object() && obj.contains("mean")) {
    if (obj.at("mean").is_array()) {
      spec.gaussian_mean = to_vector(obj.at("mean"));
      spec.dim = spec.gaussian_mean.size();
    } else {
      reader.note("target: 'mean' must be an array");
    }
  }
  reader.read(obj, "target", "variance", spec.gaussian_variance);
  reader.read(obj, "target", "log_scale", spec.log_scale);
  reader.read(obj, "target", "weights", spec.mixture_weights);
  if (obj.is_object() && obj.contains("means")) {
    if (obj.at("means").is_array()) {
      for (const auto& m : obj.at("means")) spec.mixture_means.push_back(to_vector(m));
      if (!spec.mixture_means.empty()) spec.dim = spec.mixture_means.front().size();
    } else {
      reader.note("target: 'means' must be an array of arrays");
    }
  }
  reader.read(obj, "target", "variances", spec.mixture_variances);
  reader.read(obj, "target", "S", spec.sensor_unknowns);
  reader.read(obj, "target", "B", spec.sensor_bases);
  reader.read(obj, "target", "R", spec.sensor_range);
  reader.read(obj, "target", "sigma2", spec.sensor_noise_var);
  reader.read(obj, "target", "dataset_seed", spec.sensor_dataset_seed);
  reader.read(obj, "target", "dataset_file", spec.sensor_dataset_file);
  reader.read(obj, "target", "noise_tau2", spec.noise_tau2);
  if (spec.kind == "sensor") spec.dim = 2 * spec.sensor_unknowns;
  return spec;
}

inline ReferenceSpec parse_reference(const Json& obj, ConfigReader& reader) {
  ReferenceSpec spec;
  reader.check_keys(obj, "reference",
                    {"kind", "n", "seed", "chains", "iterations", "downsample"});
  std::string kind = "none";
  reader.read(obj, "reference", "kind", kind);
  if (kind == "none") {
    spec.kind = ReferenceSpec::Kind::kNone;
  } else if (kind == "exact_target_sample") {
    spec.kind = ReferenceSpec::Kind::kExactTargetSample;
  } else if (kind == "mcmc_benchmark") {
    spec.kind = ReferenceSpec::Kind::kMcmcBenchmark;
  } else {
    reader.note("reference: kind must be 'none', 'exact_target_sample' or 'mcmc_benchmark'");
  }
  long n = spec.n;
  reader.read(obj, "reference", "n", n);
  spec.n = n;
  reader.read(obj, "reference", "seed", spec.seed);
  reader.read(obj, "reference", "chains", spec.chains);
  reader.read(obj, "reference", "iterations", spec.iterations);
  long down = spec.downsample;
  reader.read(obj, "reference", "downsample", down);
  spec.downsample = down;
  return spec;
}

}  // namespace detail

inline const std::set<std::string>& known_metrics() {
  static const std::set<std::string> metrics = {
      "mmd_poly3", "mmd_poly3_series", "cov_rmse_pooled", "cov_rmse_final",
      "mode_coverage", "log_evidence", "ess_final"};
  return metrics;
}

/// Parses and fully validates an experiment config. All violations are
/// collected and reported together.
inline ExperimentConfig parse_experiment_config(const Json& root) {
  std::vector<std::string> errors;
  detail::ConfigReader reader(errors);
  ExperimentConfig cfg;

  reader.check_keys(root, "config",
                    {"experiment", "output_dir", "target", "init", "reference",
                     "metrics", "seeds", "variants", "mode_radius",
                     "mode_min_count", "pooled_fraction", "series_reference_cap",
                     "threads", "record_timing"});
  reader.require(root, "config", "experiment");
  reader.require(root, "config", "target");
  reader.require(root, "config", "seeds");
  reader.require(root, "config", "variants");
  reader.read(root, "config", "experiment", cfg.experiment);
  reader.read(root, "config", "output_dir", cfg.output_dir);
  reader.read(root, "config", "mode_radius", cfg.mode_radius);
  reader.read(root, "config", "mode_min_count", cfg.mode_min_count);
  reader.read(root, "config", "pooled_fraction", cfg.pooled_fraction);
  long cap = cfg.series_reference_cap;
  reader.read(root, "config", "series_reference_cap", cap);
  cfg.series_reference_cap = cap;
  reader.read(root, "config", "threads", cfg.threads);
  reader.read(root, "config", "record_timing", cfg.record_timing);

  if (root.is_object() && root.contains("target"))
    cfg.target = detail::parse_target(root.at("target"), reader);

  if (root.is_object() && root.contains("init")) {
    const Json& init = root.at("init");
    reader.check_keys(init, "init", {"mean", "mean_fill", "variance"});
    if (init.is_object() && init.contains("mean")) {
      if (init.at("mean").is_array())
        cfg.init.mean = detail::to_vector(init.at("mean"));
      else
        reader.note("init: 'mean' must be an array");
    }
    reader.read(init, "init", "mean_fill", cfg.init.mean_fill);
    reader.read(init, "init", "variance", cfg.init.variance);
  }

  if (root.is_object() && root.contains("reference"))
    cfg.reference = detail::parse_reference(root.at("reference"), reader);

  reader.read(root, "config", "metrics", cfg.metrics);
  for (const auto& metric : cfg.metrics)
    if (!known_metrics().count(metric))
      reader.note("metrics: unknown metric '" + metric + "'");

  reader.read(root, "config", "seeds", cfg.seeds);
  if (root.is_object() && root.contains("seeds") && cfg.seeds.empty())
    reader.note("seeds: must be nonempty");

  if (root.is_object() && root.contains("variants")) {
    const Json& variants = root.at("variants");
    if (!variants.is_array() || variants.empty()) {
      reader.note("variants: must be a nonempty array");
    } else {
      std::set<std::string> labels;
      for (std::size_t i = 0; i < variants.size(); ++i) {
        const std::string where = "variants[" + std::to_string(i) + "]";
        VariantSpec variant;
        variant.sampler = detail::parse_variant(variants.at(i), where, reader);
        variant.label = algorithm_name(variant.sampler.algorithm);
        reader.read(variants.at(i), where, "label", variant.label);
        if (!labels.insert(variant.label).second)
          reader.note(where + ": duplicate variant label '" + variant.label + "'");
        cfg.variants.push_back(std::move(variant));
      }
    }
  }

  // range validation (collected, not thrown one by one)
  for (const auto& variant : cfg.variants) {
    try {
      variant.sampler.validate(cfg.target.dim > 0 ? cfg.target.dim : 1);
    } catch (const ConfigError& err) {
      reader.note("variant '" + variant.label + "': " + err.what());
    }
  }
  if (cfg.pooled_fraction <= 0.0 || cfg.pooled_fraction > 1.0)
    reader.note("pooled_fraction must lie in (0, 1]");
  if (cfg.mode_radius <= 0.0) reader.note("mode_radius must be > 0");
  if (cfg.threads < 1) reader.note("threads must be >= 1");

  if (!errors.empty()) {
    std::string joined;
    for (std::size_t i = 0; i < errors.size(); ++i) {
      if (i) joined += "; ";
      joined += errors[i];
    }
    throw ConfigError(joined);
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  Json root;
  try {
    root = Json::parse(in);
  } catch (const Json::exception& err) {
    throw ConfigError(std::string("config parse error: ") + err.what());
  }
  return parse_experiment_config(root);
}

}  // namespace ksmc

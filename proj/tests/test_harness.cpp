#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "ksmc/config.hpp"
#include "ksmc/csv.hpp"
#include "ksmc/experiment.hpp"
#include "ksmc/presets.hpp"

using namespace ksmc;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& leaf) {
  const fs::path dir = fs::temp_directory_path() / "ksmc_harness" / leaf;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path write_config(const fs::path& dir, const std::string& body) {
  const fs::path path = dir / "config.json";
  std::ofstream out(path);
  out << body;
  return path;
}

std::string small_experiment_json(const std::string& out_dir) {
  return R"({
  "experiment": "harness-smoke",
  "output_dir": ")" + out_dir + R"(",
  "record_timing": false,
  "target": {"kind": "gaussian", "mean": [0.5, -0.5], "variance": 1.5, "log_scale": 0.4},
  "init": {"mean_fill": 0.0, "variance": 4.0},
  "reference": {"kind": "exact_target_sample", "n": 2000, "seed": 5},
  "metrics": ["log_evidence", "mmd_poly3"],
  "seeds": [1, 2, 3],
  "variants": [
    {"label": "RWSMC", "algorithm": "RWSMC", "n_particles": 60, "n_steps": 6,
     "lambda_value": 0.0},
    {"label": "ASMC-mix", "algorithm": "ASMC", "n_particles": 60, "n_steps": 6,
     "bridge": "mixture"}
  ]
})";
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("load_config applies defaults and validates") {
  const auto dir = scratch_dir("load");
  const auto path = write_config(dir, R"({
    "experiment": "demo",
    "target": {"kind": "banana", "dim": 8, "b": 0.1, "v": 100.0},
    "seeds": [1],
    "variants": [{"algorithm": "KASMC"}]
  })");
  const ExperimentConfig cfg = load_config(path.string());
  CHECK(cfg.experiment == "demo");
  REQUIRE(cfg.variants.size() == 1);
  const SamplerConfig& sampler = cfg.variants[0].sampler;
  CHECK(sampler.algorithm == Algorithm::kKasmc);
  // defaulted scale: nu_0^2 = 2.38^2 / d
  CHECK_THAT(sampler.initial_nu2(8),
             Catch::Matchers::WithinAbs(2.38 * 2.38 / 8.0, 1e-12));
  CHECK(sampler.gamma2 == 0.01);
  CHECK(sampler.alpha_opt == 0.234);
  CHECK(sampler.ess_threshold == 0.5);
}

TEST_CASE("load_config rejects unknown algorithms by name") {
  const auto dir = scratch_dir("unknown-algo");
  const auto path = write_config(dir, R"({
    "experiment": "demo",
    "target": {"kind": "gaussian", "mean": [0.0], "variance": 1.0},
    "seeds": [1],
    "variants": [{"algorithm": "HMC"}]
  })");
  try {
    load_config(path.string());
    FAIL("expected ConfigError");
  } catch (const ConfigError& err) {
    CHECK(std::string(err.what()).find("unknown algorithm 'HMC'") != std::string::npos);
  }
}

TEST_CASE("load_config collects every violation") {
  const auto dir = scratch_dir("violations");
  const auto path = write_config(dir, R"({
    "experiment": "demo",
    "bogus_key": 1,
    "target": {"kind": "gaussian", "mean": [0.0], "variance": 1.0},
    "seeds": [1],
    "variants": [{"algorithm": "RWSMC", "n_steps": 0, "mystery": true}]
  })");
  try {
    load_config(path.string());
    FAIL("expected ConfigError");
  } catch (const ConfigError& err) {
    const std::string what = err.what();
    CHECK(what.find("unknown key 'bogus_key'") != std::string::npos);
    CHECK(what.find("unknown key 'mystery'") != std::string::npos);
    CHECK(what.find("n_steps") != std::string::npos);
  }
}

TEST_CASE("load_config rejects missing required fields") {
  const auto dir = scratch_dir("missing");
  const auto path = write_config(dir, R"({"experiment": "x"})");
  try {
    load_config(path.string());
    FAIL("expected ConfigError");
  } catch (const ConfigError& err) {
    const std::string what = err.what();
    CHECK(what.find("missing required field 'target'") != std::string::npos);
    CHECK(what.find("missing required field 'seeds'") != std::string::npos);
    CHECK(what.find("missing required field 'variants'") != std::string::npos);
  }
}

TEST_CASE("run_experiment produces the documented CSV tables") {
  const auto dir = scratch_dir("runexp");
  const std::string out_dir = (dir / "out").string();
  const auto path = write_config(dir, small_experiment_json(out_dir));
  const ExperimentConfig cfg = load_config(path.string());
  const ExperimentResult result = run_experiment(cfg);
  CHECK(result.n_runs == 6);
  CHECK(result.n_failures == 0);

  const CsvTable runs = read_csv(out_dir + "/runs.csv");
  CHECK(runs.header == std::vector<std::string>{
                           "run_id", "algorithm", "t", "rho", "ess", "resampled",
                           "alpha_hat", "nu2", "log_evidence_increment", "elapsed_ms"});
  std::set<std::string> run_ids;
  for (const auto& row : runs.rows) run_ids.insert(row[0]);
  CHECK(run_ids.size() == 6);
  CHECK(runs.rows.size() == 6 * 6);  // 6 runs x T=6 iterations

  const CsvTable particles = read_csv(out_dir + "/particles.csv");
  CHECK(particles.header == std::vector<std::string>{"run_id", "particle_id",
                                                     "weight", "x_0", "x_1"});
  CHECK(particles.rows.size() == 6 * 60);

  const CsvTable metrics = read_csv(out_dir + "/metrics.csv");
  CHECK(metrics.header ==
        std::vector<std::string>{"run_id", "metric", "value", "n_ref", "seed"});

  const CsvTable aggregate = read_csv(out_dir + "/aggregate.csv");
  std::set<std::string> agg_variants;
  for (const auto& row : aggregate.rows) agg_variants.insert(row[0]);
  CHECK(agg_variants == std::set<std::string>{"RWSMC", "ASMC-mix"});

  CHECK(fs::exists(out_dir + "/manifest.txt"));
  const std::string manifest = slurp(out_dir + "/manifest.txt");
  CHECK(manifest.find("config_hash:") != std::string::npos);
  CHECK(manifest.find("seeds: 1 2 3") != std::string::npos);

  // aggregate statistics recomputed from the per-run metric rows agree
  std::map<std::pair<std::string, std::string>, std::vector<double>> groups;
  for (const auto& row : metrics.rows) {
    const std::string run_id = row[0];
    const std::string variant = run_id.substr(0, run_id.rfind("-s"));
    groups[{variant, row[1]}].push_back(std::stod(row[2]));
  }
  for (const auto& row : aggregate.rows) {
    const auto key = std::make_pair(row[0], row[1]);
    REQUIRE(groups.count(key) == 1);
    const auto summary = summarize_quartiles(groups[key]);
    CHECK_THAT(std::stod(row[2]), Catch::Matchers::WithinAbs(summary.median, 1e-9));
    CHECK_THAT(std::stod(row[3]), Catch::Matchers::WithinAbs(summary.q25, 1e-9));
    CHECK_THAT(std::stod(row[4]), Catch::Matchers::WithinAbs(summary.q75, 1e-9));
  }
}

TEST_CASE("run_experiment is byte-for-byte deterministic with timing off") {
  const auto dir = scratch_dir("determinism");
  const std::string out_a = (dir / "a").string();
  const std::string out_b = (dir / "b").string();
  const ExperimentConfig cfg_a =
      load_config(write_config(dir, small_experiment_json(out_a)).string());
  run_experiment(cfg_a);
  ExperimentConfig cfg_b = cfg_a;
  cfg_b.output_dir = out_b;
  run_experiment(cfg_b);
  for (const std::string file : {"runs.csv", "particles.csv", "metrics.csv",
                                 "aggregate.csv"}) {
    INFO(file);
    CHECK(slurp(fs::path(out_a) / file) == slurp(fs::path(out_b) / file));
  }
}

TEST_CASE("run_experiment records individual failures and keeps going") {
  ExperimentConfig cfg;
  cfg.experiment = "failure-path";
  cfg.output_dir = scratch_dir("failures").string();
  cfg.record_timing = false;
  cfg.target.kind = "gaussian";
  cfg.target.gaussian_mean = Vector::Zero(2);
  cfg.target.dim = 2;
  cfg.metrics = {"log_evidence"};
  cfg.seeds = {1, 2};

  VariantSpec good;
  good.label = "good";
  good.sampler.algorithm = Algorithm::kRwsmc;
  good.sampler.n_particles = 40;
  good.sampler.n_steps = 4;
  cfg.variants.push_back(good);

  VariantSpec doomed;
  doomed.label = "doomed";
  doomed.sampler = good.sampler;
  Vector bad_rho(4);
  bad_rho << 0.25, 0.5, 0.75, 0.9;  // never reaches 1: rejected at run time
  doomed.sampler.custom_rho = bad_rho;
  cfg.variants.push_back(doomed);

  const ExperimentResult result = run_experiment(cfg);
  CHECK(result.n_runs == 4);
  CHECK(result.n_failures == 2);
  CHECK(fs::exists(cfg.output_dir + "/runs.csv"));
  const CsvTable failures = read_csv(cfg.output_dir + "/failures.csv");
  REQUIRE(failures.rows.size() == 2);
  for (const auto& row : failures.rows) CHECK(row[1] == "doomed");

  // the good runs still produced their rows
  const CsvTable runs = read_csv(cfg.output_dir + "/runs.csv");
  CHECK(runs.rows.size() == 2 * 4);
}

TEST_CASE("presets are listed, described, and rejected by name") {
  const auto presets = list_presets();
  CHECK(presets.size() >= 5);
  std::set<std::string> names;
  for (const auto& preset : presets) names.insert(preset.name);
  for (const std::string required :
       {"banana_moments", "sensor_multimodal", "evidence_gaussian",
        "evidence_noisy", "kgris_vs_rwpmc_covariance"})
    CHECK(names.count(required) == 1);

  const std::string sensor = describe_preset("sensor_multimodal");
  CHECK(sensor.find("S=2") != std::string::npos);
  CHECK(sensor.find("R=0.3") != std::string::npos);
  CHECK(sensor.find("sigma2=0.02") != std::string::npos);

  try {
    describe_preset("nonexistent");
    FAIL("expected ConfigError");
  } catch (const ConfigError& err) {
    const std::string what = err.what();
    CHECK(what.find("unknown preset") != std::string::npos);
    CHECK(what.find("banana_moments") != std::string::npos);  // suggestions listed
  }

  // every preset materializes into a self-consistent config
  for (const auto& preset : presets) {
    const ExperimentConfig cfg = make_preset(preset.name, 2, 1, "/tmp/ksmc_preset_probe");
    CHECK(cfg.seeds.size() == 2);
    CHECK_FALSE(cfg.variants.empty());
  }
}

TEST_CASE("preset banana_moments carries the published protocol") {
  const ExperimentConfig cfg = make_preset("banana_moments");
  CHECK(cfg.seeds.size() == 30);
  CHECK(cfg.target.dim == 8);
  CHECK(cfg.target.banana_b == 0.1);
  CHECK(cfg.target.banana_v == 100.0);
  CHECK(cfg.reference.n == 100000);
  REQUIRE(cfg.variants.size() == 3);
  for (const auto& variant : cfg.variants) {
    CHECK(variant.sampler.n_particles == 1000);
    CHECK(variant.sampler.n_steps == 20);
  }
  CHECK(cfg.variants[0].sampler.initial_nu2(8) ==
        Catch::Approx(2.38 * 2.38 / 8.0));
}

TEST_CASE("cli end-to-end: list, describe, preset, and run") {
#ifndef KSMC_CLI_PATH
  SKIP("cli path not configured");
#else
  const std::string cli = KSMC_CLI_PATH;
  const auto dir = scratch_dir("cli");

  auto shell = [&](const std::string& args) {
    const std::string cmd = cli + " " + args + " > " + (dir / "stdout.txt").string() +
                            " 2>" + (dir / "stderr.txt").string();
    return std::system(cmd.c_str());
  };

  CHECK(shell("list-presets") == 0);
  const std::string listed = slurp(dir / "stdout.txt");
  CHECK(listed.find("banana_moments") != std::string::npos);
  CHECK(listed.find("kgris_vs_rwpmc_covariance") != std::string::npos);

  CHECK(shell("describe sensor_multimodal") == 0);
  CHECK(slurp(dir / "stdout.txt").find("R=0.3") != std::string::npos);

  CHECK(shell("describe no_such_preset") != 0);
  CHECK(slurp(dir / "stderr.txt").find("unknown preset") != std::string::npos);

  const auto cfg_path = write_config(dir, small_experiment_json((dir / "out").string()));
  CHECK(shell("run " + cfg_path.string()) == 0);
  CHECK(fs::exists(dir / "out" / "aggregate.csv"));
#endif
}

// Batch experiment runner for the kernel SMC library: executes sampler-variant
// x seed grids from JSON configs or shipped presets and writes CSV tables.

#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "ksmc/config.hpp"
#include "ksmc/experiment.hpp"
#include "ksmc/presets.hpp"

namespace {

int execute(ksmc::ExperimentConfig cfg, int threads, bool quiet) {
  if (threads > 0) cfg.threads = threads;
  const auto result = ksmc::run_experiment(cfg);
  if (!quiet) {
    std::cout << "experiment: " << cfg.experiment << "\n"
              << "runs: " << result.n_runs << " (" << result.n_failures
              << " failed)\n"
              << "output: " << result.output_dir << "\n";
  }
  return result.n_failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ksmc: kernel sequential Monte Carlo experiment runner"};
  app.require_subcommand(1);

  int threads = 0;
  std::uint64_t base_seed = 1;
  app.add_option("--threads", threads, "worker threads across runs");
  app.add_option("--seed", base_seed, "base seed for preset seed ranges");

  std::string config_path;
  auto* run_cmd = app.add_subcommand("run", "run an experiment config file");
  run_cmd->add_option("config", config_path, "path to a JSON experiment config")
      ->required();
  std::string run_out;
  run_cmd->add_option("--out", run_out, "override the output directory");

  std::string preset_name;
  int n_seeds = 0;
  std::string preset_out;
  auto* preset_cmd = app.add_subcommand("preset", "run a shipped preset");
  preset_cmd->add_option("name", preset_name, "preset name")->required();
  preset_cmd->add_option("--seeds", n_seeds, "number of seeds to run");
  preset_cmd->add_option("--out", preset_out, "output directory");

  auto* list_cmd = app.add_subcommand("list-presets", "list shipped presets");

  std::string describe_name;
  auto* describe_cmd = app.add_subcommand("describe", "describe a preset");
  describe_cmd->add_option("name", describe_name, "preset name")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) {
      ksmc::ExperimentConfig cfg = ksmc::load_config(config_path);
      if (!run_out.empty()) cfg.output_dir = run_out;
      return execute(std::move(cfg), threads, false);
    }
    if (preset_cmd->parsed()) {
      return execute(ksmc::make_preset(preset_name, n_seeds, base_seed, preset_out),
                     threads, false);
    }
    if (list_cmd->parsed()) {
      for (const auto& preset : ksmc::list_presets())
        std::cout << preset.name << "\n";
      return 0;
    }
    if (describe_cmd->parsed()) {
      std::cout << describe_name << ": " << ksmc::describe_preset(describe_name)
                << "\n";
      return 0;
    }
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  }
  return 0;
}

// SPDX-License-Identifier: Apache-2.0
//
// Command line front end: generate / train / evaluate / export-plotdata.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "lpvid/lpvid.hpp"

namespace {

lpvid::ExperimentConfig load_config(const std::string& path,
                                    const std::string& mode_override,
                                    uint64_t seed_override, bool has_seed) {
  lpvid::ExperimentConfig cfg = lpvid::load_experiment_config(path);
  if (!mode_override.empty()) cfg.mode = lpvid::parse_mode(mode_override);
  if (has_seed) {
    cfg.seed = seed_override;
    cfg.training.seed = seed_override;
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LPV state-space identification with sub-space encoder networks"};
  app.require_subcommand(1);

  std::string config_path, mode_str, model_path, data_path, out_path;
  std::string plot_in, plot_out;
  int threads = 1;
  uint64_t seed = 0;

  auto* gen = app.add_subcommand("generate", "generate dataset splits");
  gen->add_option("--config", config_path, "experiment config (JSON)")
      ->required();
  auto* gen_seed = gen->add_option("--seed", seed, "override master seed");

  auto* train = app.add_subcommand("train", "train a model on generated data");
  train->add_option("--config", config_path, "experiment config (JSON)")
      ->required();
  train->add_option("--mode", mode_str,
                    "scheduling mode: self|external|oracle");
  train->add_option("--threads", threads, "concurrent rollout chunks (1 = bit-reproducible)");
  auto* train_seed = train->add_option("--seed", seed, "override master seed");

  auto* eval = app.add_subcommand("evaluate", "evaluate a saved model");
  eval->add_option("--model", model_path, "model document (JSON)")->required();
  eval->add_option("--data", data_path, "dataset CSV")->required();
  eval->add_option("--mode", mode_str, "scheduling mode: self|external|oracle");
  eval->add_option("--out", out_path, "prediction CSV path");

  auto* plot = app.add_subcommand("export-plotdata",
                                  "pivot a history/prediction CSV to long form");
  plot->add_option("--input", plot_in, "source CSV")->required();
  plot->add_option("--output", plot_out, "tidy CSV to write")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      const auto cfg = load_config(config_path, "", seed, !gen_seed->empty());
      return lpvid::cmd_generate(cfg);
    }
    if (train->parsed()) {
      const auto cfg =
          load_config(config_path, mode_str, seed, !train_seed->empty());
      return lpvid::cmd_train(cfg, threads);
    }
    if (eval->parsed()) {
      const auto mode = mode_str.empty() ? lpvid::SchedulingMode::self_scheduled
                                         : lpvid::parse_mode(mode_str);
      return lpvid::cmd_evaluate(model_path, data_path, mode, out_path);
    }
    if (plot->parsed()) return lpvid::cmd_export_plotdata(plot_in, plot_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "lpvid/benchmark.hpp"
#include "lpvid/dataset_io.hpp"
#include "lpvid/trainer.hpp"

#include <json.hpp>

namespace lpvid {

/// One experiment: benchmark + excitation + noise + model + training. All
/// scientific parameters live here; only the output directory may be
/// overridden from the environment.
struct ExperimentConfig {
  uint64_t seed = 1;
  std::string output_dir = "out";

  std::string benchmark_name = "pendulum";
  double pend_omega0_sq = 9.0;
  double pend_damping = 0.5;
  double pend_input_gain = 5.0;
  double pend_sample_time = 0.1;

  ExcitationConfig excitation;  // sample_time synced to the benchmark's
  NoiseSpec noise;
  SplitSpec sizes;

  int n_x = 2;
  int n_p = 1;
  int n_p_x = 1;  // resolved split (defaults: x gets the ceil half)
  int n_p_y = 0;
  int lag = 2;
  std::vector<int> hidden = {64, 64};

  SchedulingMode mode = SchedulingMode::self_scheduled;
  TrainingConfig training;
};

namespace detail {

inline void check_keys(const nlohmann::json& obj,
                       std::initializer_list<const char*> allowed,
                       const std::string& where) {
  if (!obj.is_object()) throw ConfigError("config: " + where + " must be an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed)
      if (it.key() == a) { ok = true; break; }
    if (!ok)
      throw ConfigError("config: unknown key '" + it.key() + "' in " + where);
  }
}

template <typename T>
T get_or(const nlohmann::json& obj, const char* key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("config: bad value for '") + key + "'");
  }
}

template <typename T>
T get_required(const nlohmann::json& obj, const char* key,
               const std::string& where) {
  if (!obj.contains(key))
    throw ConfigError("config: missing key '" + std::string(key) + "' in " +
                      where);
  try {
    return obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("config: bad value for '") + key + "'");
  }
}

}  // namespace detail

inline SchedulingMode parse_mode(const std::string& s) {
  if (s == "self_scheduled" || s == "self") return SchedulingMode::self_scheduled;
  if (s == "external") return SchedulingMode::external;
  if (s == "oracle") return SchedulingMode::oracle;
  throw ConfigError("config: unknown mode '" + s + "'");
}

inline std::string mode_name(SchedulingMode m) {
  switch (m) {
    case SchedulingMode::self_scheduled: return "self_scheduled";
    case SchedulingMode::external: return "external";
    case SchedulingMode::oracle: return "oracle";
  }
  return "?";
}

/// Strict parse: versioned schema, unknown keys rejected everywhere.
inline ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
  using detail::check_keys;
  using detail::get_or;
  using detail::get_required;

  check_keys(j,
             {"schema", "seed", "output_dir", "benchmark", "excitation",
              "noise", "data", "model", "mode", "training"},
             "top level");
  if (get_required<std::string>(j, "schema", "top level") != "lpvid/1")
    throw ConfigError("config: unsupported schema (expected lpvid/1)");

  ExperimentConfig cfg;
  cfg.seed = get_or<uint64_t>(j, "seed", 1);
  cfg.output_dir = get_or<std::string>(j, "output_dir", "out");

  if (j.contains("benchmark")) {
    const auto& b = j.at("benchmark");
    check_keys(b, {"name", "omega0_sq", "damping", "input_gain", "sample_time"},
               "benchmark");
    cfg.benchmark_name = get_or<std::string>(b, "name", "pendulum");
    if (cfg.benchmark_name != "pendulum")
      throw ConfigError("config: unknown benchmark '" + cfg.benchmark_name + "'");
    cfg.pend_omega0_sq = get_or<double>(b, "omega0_sq", 9.0);
    cfg.pend_damping = get_or<double>(b, "damping", 0.5);
    cfg.pend_input_gain = get_or<double>(b, "input_gain", 5.0);
    cfg.pend_sample_time = get_or<double>(b, "sample_time", 0.1);
  }

  if (j.contains("excitation")) {
    const auto& e = j.at("excitation");
    check_keys(e, {"amplitude", "band", "noise_std"}, "excitation");
    cfg.excitation.amplitude = get_or<double>(e, "amplitude", 0.5);
    cfg.excitation.noise_std = get_or<double>(e, "noise_std", 1.0 / 3.0);
    if (e.contains("band")) {
      const auto band = e.at("band").get<std::vector<double>>();
      if (band.size() != 2 || band[0] >= band[1])
        throw ConfigError("config: excitation band must be [lo, hi]");
      cfg.excitation.band_lo = band[0];
      cfg.excitation.band_hi = band[1];
    }
  }
  cfg.excitation.sample_time = cfg.pend_sample_time;

  {
    const auto& n = j.at("noise");
    check_keys(n, {"structure", "snr_db", "sigma_e"}, "noise");
    const std::string s = get_or<std::string>(n, "structure", "output_error");
    if (s == "output_error") cfg.noise.structure = NoiseStructure::output_error;
    else if (s == "innovation") cfg.noise.structure = NoiseStructure::innovation;
    else throw ConfigError("config: unknown noise structure '" + s + "'");
    if (n.contains("snr_db")) cfg.noise.snr_db = n.at("snr_db").get<double>();
    if (n.contains("sigma_e")) cfg.noise.sigma_e = n.at("sigma_e").get<double>();
    if (!cfg.noise.snr_db && !cfg.noise.sigma_e)
      throw ConfigError("config: noise needs snr_db or sigma_e");
  }

  {
    const auto& d = j.at("data");
    check_keys(d, {"n_est", "n_val", "n_test"}, "data");
    cfg.sizes.n_est = get_required<int>(d, "n_est", "data");
    cfg.sizes.n_val = get_required<int>(d, "n_val", "data");
    cfg.sizes.n_test = get_required<int>(d, "n_test", "data");
  }

  {
    const auto& m = j.at("model");
    check_keys(m,
               {"state_dim", "scheduling_dim", "scheduling_dim_x",
                "scheduling_dim_y", "lag", "hidden"},
               "model");
    cfg.n_x = get_required<int>(m, "state_dim", "model");
    cfg.n_p = get_or<int>(m, "scheduling_dim", 0);
    if (cfg.n_x < 1 || cfg.n_p < 0)
      throw ConfigError("config: bad model dimensions");
    // Default split: the state partition gets the larger half.
    cfg.n_p_x = get_or<int>(m, "scheduling_dim_x", (cfg.n_p + 1) / 2);
    cfg.n_p_y = get_or<int>(m, "scheduling_dim_y", cfg.n_p - cfg.n_p_x);
    if (cfg.n_p_x < 0 || cfg.n_p_y < 0 || cfg.n_p_x + cfg.n_p_y != cfg.n_p)
      throw ConfigError("config: scheduling partition must sum to scheduling_dim");
    cfg.lag = get_or<int>(m, "lag", cfg.n_x);
    if (cfg.lag < 1) throw ConfigError("config: lag must be positive");
    cfg.hidden = get_or<std::vector<int>>(m, "hidden", {64, 64});
  }

  cfg.mode = parse_mode(get_or<std::string>(j, "mode", "self_scheduled"));

  {
    const auto& t = j.at("training");
    check_keys(t,
               {"batch_size", "t_start", "t_final", "t_warmup_updates",
                "max_updates", "validation_period", "patience",
                "learning_rate", "beta1", "beta2", "epsilon", "seed"},
               "training");
    cfg.training.batch_size = get_or<int>(t, "batch_size", 256);
    cfg.training.t_start = get_or<int>(t, "t_start", 5);
    cfg.training.t_final = get_or<int>(t, "t_final", 60);
    cfg.training.t_warmup_updates = get_or<long>(t, "t_warmup_updates", 1000);
    cfg.training.max_updates = get_required<long>(t, "max_updates", "training");
    cfg.training.validation_period = get_or<long>(t, "validation_period", 500);
    cfg.training.patience = get_or<int>(t, "patience", 20);
    cfg.training.adam.learning_rate = get_or<double>(t, "learning_rate", 1e-3);
    cfg.training.adam.beta1 = get_or<double>(t, "beta1", 0.9);
    cfg.training.adam.beta2 = get_or<double>(t, "beta2", 0.999);
    cfg.training.adam.epsilon = get_or<double>(t, "epsilon", 1e-8);
    cfg.training.seed = get_or<uint64_t>(t, "seed", cfg.seed);
  }
  return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  return parse_experiment_config(read_json_file(path));
}

}  // namespace lpvid

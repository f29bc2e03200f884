// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <string>

#include "lpvid/config.hpp"
#include "lpvid/metrics.hpp"
#include "lpvid/serialize.hpp"

namespace lpvid {

namespace detail {

inline std::string resolved_output_dir(const ExperimentConfig& cfg) {
  // The environment may override the output directory only; every scientific
  // parameter stays in the config document.
  if (const char* env = std::getenv("LPVID_OUTPUT_DIR")) return env;
  return cfg.output_dir;
}

inline NonlinearSystemDef config_system(const ExperimentConfig& cfg) {
  return builtin_pendulum(cfg.pend_omega0_sq, cfg.pend_damping,
                          cfg.pend_input_gain, cfg.pend_sample_time);
}

inline double resolved_sigma_e(const ExperimentConfig& cfg,
                               const NonlinearSystemDef& sys) {
  if (cfg.noise.sigma_e) return *cfg.noise.sigma_e;
  ExcitationConfig e = cfg.excitation;
  e.length = cfg.sizes.n_est;
  Rng rng(derive_seed(cfg.seed, "estimation"));
  const Matrix u = generate_excitation(e, rng, sys.n_u);
  return solve_noise_std_for_snr(sys, u, *cfg.noise.snr_db, e.sample_time);
}

}  // namespace detail

/// Generates the three dataset splits and their metadata sidecars.
inline int cmd_generate(const ExperimentConfig& cfg, std::ostream& out = std::cout) {
  const NonlinearSystemDef sys = detail::config_system(cfg);
  const DataSplits splits =
      split_dataset(sys, cfg.excitation, cfg.noise, cfg.seed, cfg.sizes);
  const double sigma_e = detail::resolved_sigma_e(cfg, sys);

  const std::filesystem::path dir = detail::resolved_output_dir(cfg);
  std::filesystem::create_directories(dir);

  const std::pair<const char*, const DataSet*> files[] = {
      {"est", &splits.est}, {"val", &splits.val}, {"test", &splits.test}};
  for (const auto& [stem, ds] : files) {
    const auto csv = dir / (std::string(stem) + ".csv");
    write_dataset_csv(csv.string(), *ds);
    write_json_file((dir / (std::string(stem) + ".meta.json")).string(),
                    dataset_metadata(*ds, &sys, cfg.seed, sigma_e,
                                     cfg.noise.snr_db));
    out << "wrote " << csv.string() << " (" << ds->n() << " samples)\n";
  }
  return 0;
}

/// Builds model, scheduling net and encoder from the config seeds, trains on
/// est/val from the output directory, writes model.json and history.csv and
/// prints the final validation BFR.
inline int cmd_train(const ExperimentConfig& cfg, int threads = 1,
                     std::ostream& out = std::cout) {
  const std::filesystem::path dir = detail::resolved_output_dir(cfg);
  DataSet est = read_dataset_csv((dir / "est.csv").string());
  DataSet val = read_dataset_csv((dir / "val.csv").string());
  est.role = "estimation";
  val.role = "validation";
  est.stats = compute_normalization(est);
  est.has_stats = true;
  val.stats = est.stats;
  val.has_stats = true;

  LpvSsModel model =
      init_lpv_model(cfg.n_x, est.n_u(), est.n_y(), cfg.n_p_x, cfg.n_p_y,
                     cfg.noise.structure, derive_seed(cfg.seed, "model-init"));

  std::optional<SchedulingNet> sched;
  if (cfg.mode != SchedulingMode::oracle)
    sched = make_scheduling_net(model, cfg.hidden,
                                derive_seed(cfg.seed, "scheduling-init"));
  else if (est.n_p() != model.n_p())
    throw ConfigError("train: oracle mode needs " + std::to_string(model.n_p()) +
                      " p columns, dataset has " + std::to_string(est.n_p()));

  EncoderNet enc = make_encoder(cfg.n_x, est.n_u(), est.n_y(), cfg.lag,
                                cfg.hidden, derive_seed(cfg.seed, "encoder-init"));

  std::ofstream history((dir / "history.csv").string());
  if (!history) throw DataError("cannot write history.csv");

  const TrainingHistory hist =
      train(model, sched ? &*sched : nullptr, enc, est, val, cfg.training,
            cfg.mode, threads, &history);

  save_model((dir / "model.json").string(), model, sched ? &*sched : nullptr,
             enc);

  const ValidationPoint final_vp = evaluate_validation(
      model, sched ? &*sched : nullptr, &enc, val, cfg.mode);
  out << "model written to " << (dir / "model.json").string() << "\n";
  out << "validation BFR: " << format_double(final_vp.bfr_percent)
      << "% (best update " << hist.best_update << ", "
      << (hist.early_stopped ? "early stopped" : "budget exhausted") << ")\n";
  return 0;
}

struct EvaluationResult {
  Matrix y_ref;    // measured outputs over the simulated span
  Matrix y_sim;    // model outputs, original units
  Matrix p_traj;   // scheduling trajectory
  int start_row;   // 0-based row of the first simulated sample
  FitReport report;
};

/// Simulation-semantics evaluation: the encoder initializes the state from
/// the first lag window and the model runs free from there (ê = 0; in
/// external mode measured I/O additionally drives the scheduling chain).
inline EvaluationResult evaluate_simulation(const LpvSsModel& m,
                                            const SchedulingNet* sched,
                                            const EncoderNet& enc,
                                            SchedulingMode mode,
                                            const DataSet& ds) {
  if (ds.n_u() != m.n_u || ds.n_y() != m.n_y)
    throw DimensionError("evaluate: dataset channels do not match the model");
  const int lag = enc.lag;
  if (ds.n() < lag + 2) throw DimensionError("evaluate: dataset too short");
  if (mode == SchedulingMode::oracle) {
    if (!ds.has_oracle_p())
      throw DimensionError("evaluate: oracle mode needs p columns");
    if (ds.n_p() != m.n_p())
      throw DimensionError("evaluate: oracle p width mismatch");
  }
  if (mode != SchedulingMode::oracle && m.n_p() > 0 && sched == nullptr)
    throw DimensionError("evaluate: model has no scheduling net for this mode");

  const Vector x0 =
      encode(enc, LagWindow{m.stats.norm_u_rows(ds.u.topRows(lag + 1)),
                            m.stats.norm_y_rows(ds.y.topRows(lag + 1))});

  SimulationResult sim;
  const Eigen::Index span = ds.n() - lag;
  switch (mode) {
    case SchedulingMode::self_scheduled: {
      const Matrix u_slice = ds.u.bottomRows(span);
      sim = simulate(m, sched, &enc, mode, u_slice, x0);
      break;
    }
    case SchedulingMode::oracle: {
      const Matrix u_slice = ds.u.bottomRows(span);
      const Matrix p_slice = ds.p.bottomRows(span);
      sim = simulate(m, nullptr, nullptr, mode, u_slice, x0, nullptr, &p_slice);
      break;
    }
    case SchedulingMode::external:
      sim = simulate(m, sched, &enc, mode, ds.u, x0, &ds.y);
      break;
  }

  EvaluationResult r;
  r.start_row = lag;
  r.y_ref = ds.y.bottomRows(span);
  r.y_sim = sim.y_sim;
  r.p_traj = sim.p_traj;
  r.report.bfr_percent = bfr(r.y_ref, r.y_sim);
  r.report.rms_error = rms(r.y_ref - r.y_sim);
  r.report.n_samples = static_cast<long>(span);
  return r;
}

/// Evaluates a saved model on a dataset file, writes the per-sample
/// prediction CSV and a one-row fit report CSV, and echoes the report.
inline int cmd_evaluate(const std::string& model_path,
                        const std::string& data_path, SchedulingMode mode,
                        std::string out_path = "",
                        std::ostream& out = std::cout) {
  const ModelBundle bundle = load_model(model_path);
  const DataSet ds = read_dataset_csv(data_path);

  EvaluationResult r =
      evaluate_simulation(bundle.model, bundle.sched ? &*bundle.sched : nullptr,
                          bundle.encoder, mode, ds);

  // Noise ceiling from the dataset sidecar, when present.
  r.report.noise_ceiling_percent = std::numeric_limits<double>::quiet_NaN();
  const std::filesystem::path meta_path =
      std::filesystem::path(data_path).replace_extension(".meta.json");
  if (std::filesystem::exists(meta_path)) {
    const auto meta = read_json_file(meta_path.string());
    if (meta.contains("noise") && meta.at("noise").contains("snr_db"))
      r.report.noise_ceiling_percent =
          noise_ceiling_bfr(meta.at("noise").at("snr_db").get<double>());
  }

  if (out_path.empty()) {
    const std::filesystem::path dp(data_path);
    out_path = (dp.parent_path() /
                ("eval_" + dp.stem().string() + "_" + mode_name(mode) + ".csv"))
                   .string();
  }

  {
    std::ofstream os(out_path);
    if (!os) throw DataError("cannot write " + out_path);
    const int n_y = static_cast<int>(r.y_ref.cols());
    const int n_p = static_cast<int>(r.p_traj.cols());
    os << 'k';
    for (int i = 1; i <= n_y; ++i) os << ",y_" << i;
    for (int i = 1; i <= n_y; ++i) os << ",yhat_" << i;
    for (int i = 1; i <= n_y; ++i) os << ",err_" << i;
    for (int i = 1; i <= n_p; ++i) os << ",p_" << i;
    os << '\n';
    for (Eigen::Index k = 0; k < r.y_ref.rows(); ++k) {
      os << (r.start_row + k + 1);
      for (int i = 0; i < n_y; ++i) os << ',' << format_double(r.y_ref(k, i));
      for (int i = 0; i < n_y; ++i) os << ',' << format_double(r.y_sim(k, i));
      for (int i = 0; i < n_y; ++i)
        os << ',' << format_double(r.y_ref(k, i) - r.y_sim(k, i));
      for (int i = 0; i < n_p; ++i) os << ',' << format_double(r.p_traj(k, i));
      os << '\n';
    }
  }

  const std::string report_path =
      std::filesystem::path(out_path).replace_extension(".report.csv").string();
  {
    std::ofstream os(report_path);
    if (!os) throw DataError("cannot write " + report_path);
    os << "bfr_percent,rms_error,noise_ceiling_percent,n_samples\n";
    os << format_double(r.report.bfr_percent) << ','
       << format_double(r.report.rms_error) << ','
       << format_double(r.report.noise_ceiling_percent) << ','
       << r.report.n_samples << '\n';
  }

  out << "predictions written to " << out_path << "\n";
  out << "BFR: " << format_double(r.report.bfr_percent)
      << "%  (noise ceiling: " << format_double(r.report.noise_ceiling_percent)
      << "%)  RMS error: " << format_double(r.report.rms_error) << "\n";
  return 0;
}

/// Pivots a wide CSV (first column = index) into tidy long format
/// series,<index>,value with one observation per row. Empty cells are
/// skipped; cell text is copied verbatim.
inline int cmd_export_plotdata(const std::string& input_path,
                               const std::string& output_path,
                               std::ostream& out = std::cout) {
  std::ifstream is(input_path);
  if (!is) throw DataError("cannot open " + input_path);
  std::ofstream os(output_path);
  if (!os) throw DataError("cannot write " + output_path);

  std::string line;
  if (!std::getline(is, line)) throw DataError(input_path + ": empty file", 1);
  const auto header = detail::split_csv_line(line);
  if (header.size() < 2)
    throw DataError(input_path + ": need an index column and data columns", 1);

  os << "series," << header[0] << ",value\n";
  long line_no = 1;
  long rows_out = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size())
      throw DataError(input_path + ": wrong field count", line_no);
    for (size_t i = 1; i < cells.size(); ++i) {
      if (cells[i].empty()) continue;
      os << header[i] << ',' << cells[0] << ',' << cells[i] << '\n';
      ++rows_out;
    }
  }
  out << "wrote " << rows_out << " observations to " << output_path << "\n";
  return 0;
}

}  // namespace lpvid

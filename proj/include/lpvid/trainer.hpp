// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cmath>
#include <limits>
#include <memory>
#include <ostream>

#include "lpvid/adam.hpp"
#include "lpvid/loss.hpp"
#include "lpvid/metrics.hpp"
#include "lpvid/text.hpp"

namespace lpvid {

struct TrainingConfig {
  int batch_size = 256;
  int t_start = 5;
  int t_final = 60;
  long t_warmup_updates = 1000;
  long max_updates = 0;
  long validation_period = 500;
  int patience = 20;  // validation checks without improvement before stopping
  AdamConfig adam;
  uint64_t seed = 1;
};

/// Truncation warm-up: linear interpolation from t_start to t_final over the
/// warm-up window, rounded half-up, constant afterwards.
inline int schedule_T(long update_index, const TrainingConfig& cfg) {
  if (update_index < 0) throw DimensionError("schedule_T: negative index");
  if (cfg.t_warmup_updates <= 0 || update_index >= cfg.t_warmup_updates)
    return cfg.t_final;
  const double x =
      cfg.t_start + (cfg.t_final - cfg.t_start) *
                        (static_cast<double>(update_index) /
                         static_cast<double>(cfg.t_warmup_updates));
  return static_cast<int>(std::floor(x + 0.5));
}

struct ValidationPoint {
  long update = -1;
  double loss = std::numeric_limits<double>::infinity();
  double bfr_percent = 0.0;
  bool diverged = false;
};

struct TrainingHistory {
  std::vector<double> batch_losses;  // NaN marks a skipped update
  std::vector<int> truncations;
  std::vector<double> seconds;
  std::vector<ValidationPoint> validations;
  long best_update = -1;
  double best_val_loss = std::numeric_limits<double>::infinity();
  long skipped_updates = 0;
  bool early_stopped = false;
};

/// Full-span prediction rollout over the validation set; loss is the mean
/// squared error, BFR the metric of the fit report. A divergent rollout is
/// reported instead of thrown.
inline ValidationPoint evaluate_validation(const LpvSsModel& m,
                                           const SchedulingNet* sched,
                                           const EncoderNet* enc,
                                           const DataSet& ds,
                                           SchedulingMode mode) {
  ValidationPoint v;
  const int lag = enc ? enc->lag : 0;
  const int span = ds.n() - lag;
  try {
    DataWindow w;
    w.lag = lag;
    w.u = ds.u;
    w.y = ds.y;
    if (mode == SchedulingMode::oracle) {
      if (!ds.has_oracle_p())
        throw DimensionError("validation: oracle mode needs p columns");
      w.p = ds.p.bottomRows(span);
    }
    const RolloutResult r = rollout(m, sched, enc, mode, w, span);
    const Matrix y_ref = ds.y.bottomRows(span);
    v.loss = (y_ref - r.y_pred).rowwise().squaredNorm().mean();
    v.bfr_percent = bfr(y_ref, r.y_pred);
  } catch (const DivergenceError&) {
    v.diverged = true;
  }
  return v;
}

namespace detail {

inline void telemetry_row(std::ostream* os, long update, int T,
                          const std::string& batch_loss,
                          const std::string& val_loss,
                          const std::string& val_bfr, double seconds) {
  if (!os) return;
  *os << update << ',' << T << ',' << batch_loss << ',' << val_loss << ','
      << val_bfr << ',' << format_double(seconds) << '\n';
}

}  // namespace detail

/// Adam training of (theta, eta, xi) under the batch prediction loss with
/// truncation warm-up and early stopping. Parameters are updated in place;
/// they end at the best-validation checkpoint. The effective batch size is
/// clamped to the number of admissible anchors. `telemetry` (optional)
/// receives one CSV row per update: update,T,batch_loss,val_loss,val_bfr,
/// seconds. Throws TrainingError after 10 consecutive skipped updates.
inline TrainingHistory train(LpvSsModel& model, SchedulingNet* sched,
                             EncoderNet& enc, const DataSet& est,
                             const DataSet& val, const TrainingConfig& cfg,
                             SchedulingMode mode, int threads = 1,
                             std::ostream* telemetry = nullptr) {
  if (cfg.t_start < 1 || cfg.t_final < cfg.t_start)
    throw ConfigError("train: need 1 <= t_start <= t_final");
  if (cfg.batch_size < 1 || cfg.validation_period < 1 || cfg.patience < 1)
    throw ConfigError("train: counts must be positive");
  if (admissible_count(est.n(), cfg.t_final, enc.lag) < 1)
    throw ConfigError("train: estimation set too short for (lag, t_final)");
  if (val.n() - enc.lag < 2)
    throw ConfigError("train: validation set too short for the lag window");

  model.stats = est.has_stats ? est.stats : compute_normalization(est);

  ParamRegistry registry = collect_parameters(model, sched, &enc);
  AdamState adam = make_adam_state(registry);
  Rng sampler_seeds(derive_seed(cfg.seed, "sampler"));

  TrainingHistory hist;
  if (cfg.max_updates <= 0) return hist;

  if (telemetry) *telemetry << "update,T,batch_loss,val_loss,val_bfr,seconds\n";

  int current_T = -1;
  std::unique_ptr<BatchSampler> sampler;
  Vector best_checkpoint;
  int stale_validations = 0;
  long consecutive_skips = 0;

  for (long u = 0; u < cfg.max_updates; ++u) {
    const auto tic = std::chrono::steady_clock::now();
    const int T = schedule_T(u, cfg);
    if (T != current_T) {
      current_T = T;
      sampler = std::make_unique<BatchSampler>(sampler_seeds.raw(), est.n(), T,
                                               enc.lag);
    }
    const int b =
        std::min(cfg.batch_size, admissible_count(est.n(), T, enc.lag));
    const BatchSpec batch = sampler->next(b);

    double loss_value = std::numeric_limits<double>::quiet_NaN();
    bool applied = false;
    try {
      const LossValueAndGrads lg = batch_loss_gradients(
          model, sched, &enc, est, batch, mode, registry, threads);
      loss_value = lg.value;
      applied = adam_step(registry, lg.grads, adam, cfg.adam);
    } catch (const DivergenceError&) {
      applied = false;
    }
    if (applied) {
      consecutive_skips = 0;
    } else {
      hist.skipped_updates += 1;
      consecutive_skips += 1;
      if (consecutive_skips >= 10)
        throw TrainingError(
            "training aborted: 10 consecutive skipped updates (divergent or "
            "non-finite gradients) at update " +
            std::to_string(u));
    }

    hist.batch_losses.push_back(applied ? loss_value
                                        : std::numeric_limits<double>::quiet_NaN());
    hist.truncations.push_back(T);

    std::string val_loss_s, val_bfr_s;
    const bool do_validate =
        (u + 1) % cfg.validation_period == 0 || u + 1 == cfg.max_updates;
    if (do_validate) {
      ValidationPoint vp = evaluate_validation(model, sched, &enc, val, mode);
      vp.update = u;
      hist.validations.push_back(vp);
      if (!vp.diverged && vp.loss < hist.best_val_loss) {
        hist.best_val_loss = vp.loss;
        hist.best_update = u;
        best_checkpoint = registry.flatten();
        stale_validations = 0;
      } else {
        stale_validations += 1;
      }
      if (!vp.diverged) {
        val_loss_s = format_double(vp.loss);
        val_bfr_s = format_double(vp.bfr_percent);
      } else {
        val_loss_s = "diverged";
        val_bfr_s = "";
      }
    }

    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - tic)
            .count();
    hist.seconds.push_back(secs);
    detail::telemetry_row(telemetry, u, T,
                          applied ? format_double(loss_value) : "", val_loss_s,
                          val_bfr_s, secs);

    if (do_validate && stale_validations >= cfg.patience) {
      hist.early_stopped = true;
      break;
    }
  }

  if (hist.best_update >= 0) registry.unflatten(best_checkpoint);
  return hist;
}

}  // namespace lpvid

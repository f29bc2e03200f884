// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <string>

#include "lpvid/dataset.hpp"
#include "lpvid/rng.hpp"

namespace lpvid {

/// Discrete-time nonlinear data generator
///   x_{k+1} = f(x_k, u_k, w_k),  y_k = h(x_k, u_k) + w_k,
/// with an optional oracle scheduling map phi(x, u) that witnesses an exact
/// affine LPV rewrite of the dynamics.
struct NonlinearSystemDef {
  int n_x = 0, n_u = 0, n_y = 0, n_p = 0;
  std::function<Vector(const Vector&, const Vector&, const Vector&)> f;
  std::function<Vector(const Vector&, const Vector&)> h;
  std::function<Vector(const Vector&, const Vector&)> scheduling;  // may be empty
  std::string name;
  std::map<std::string, double> parameters;  // recorded in dataset metadata
};

/// u_k = amplitude * sin(omega * T_s * k) + v_k with v_k ~ N(0, noise_std^2).
/// The carrier frequency is drawn once per realization from U(band_lo,
/// band_hi) in Hz, so omega = 2 pi f.
struct ExcitationConfig {
  double amplitude = 0.5;
  double band_lo = 1.0;  // Hz
  double band_hi = 2.0;  // Hz
  double sample_time = 0.01;
  double noise_std = 1.0 / 3.0;
  int length = 0;
};

inline Matrix generate_excitation(const ExcitationConfig& cfg, Rng& rng,
                                  int n_u = 1) {
  if (cfg.length < 1 || cfg.sample_time <= 0.0 || cfg.band_lo >= cfg.band_hi)
    throw ConfigError("generate_excitation: invalid excitation config");
  Matrix u(cfg.length, n_u);
  for (int c = 0; c < n_u; ++c) {
    const double omega = 2.0 * M_PI * rng.uniform(cfg.band_lo, cfg.band_hi);
    for (int k = 0; k < cfg.length; ++k)
      u(k, c) = cfg.amplitude * std::sin(omega * cfg.sample_time * k) +
                rng.normal(0.0, cfg.noise_std);
  }
  return u;
}

/// Forward recursion from x_0 = 0 with w_k ~ N(0, noise_std^2 I). When the
/// system provides an oracle map, p_k = phi(x_k, u_k) is recorded per sample.
inline DataSet simulate_system(const NonlinearSystemDef& sys, const Matrix& u,
                               double noise_std, Rng& rng,
                               double sample_time = 0.0) {
  if (u.cols() != sys.n_u)
    throw DimensionError("simulate_system: input channel mismatch");
  if (!u.allFinite())
    throw DimensionError("simulate_system: non-finite input");
  const Eigen::Index N = u.rows();
  DataSet ds;
  ds.u = u;
  ds.y.resize(N, sys.n_y);
  if (sys.scheduling) ds.p.resize(N, sys.n_p);
  ds.sample_time = sample_time;

  Vector x = Vector::Zero(sys.n_x);
  Vector w(sys.n_y);
  for (Eigen::Index k = 0; k < N; ++k) {
    if (!x.allFinite() || x.cwiseAbs().maxCoeff() > 1e9)
      throw DivergenceError(
          "simulate_system: state explosion at step " + std::to_string(k),
          static_cast<long>(k));
    const Vector u_k = u.row(k).transpose();
    for (Eigen::Index i = 0; i < w.size(); ++i)
      w(i) = noise_std > 0.0 ? rng.normal(0.0, noise_std) : 0.0;
    ds.y.row(k) = (sys.h(x, u_k) + w).transpose();
    if (sys.scheduling) ds.p.row(k) = sys.scheduling(x, u_k).transpose();
    x = sys.f(x, u_k, w);
  }
  return ds;
}

/// Forced damped pendulum, explicit Euler at step T_s, angular velocity
/// output:
///   x1+ = x1 + Ts x2
///   x2+ = x2 + Ts (-w0sq sin x1 - d x2 + c u)
///   y   = x2 + w
/// The oracle scheduling p = sinc(x1) = sin(x1)/x1 gives the exact affine
/// rewrite -w0sq sin(x1) = -w0sq p x1.
inline NonlinearSystemDef builtin_pendulum(double omega0_sq = 9.0,
                                           double damping = 0.5,
                                           double input_gain = 5.0,
                                           double sample_time = 0.1) {
  NonlinearSystemDef sys;
  sys.n_x = 2;
  sys.n_u = 1;
  sys.n_y = 1;
  sys.n_p = 1;
  sys.name = "pendulum";
  sys.parameters = {{"omega0_sq", omega0_sq},
                    {"damping", damping},
                    {"input_gain", input_gain},
                    {"sample_time", sample_time}};
  sys.f = [=](const Vector& x, const Vector& u, const Vector&) {
    Vector xn(2);
    xn(0) = x(0) + sample_time * x(1);
    xn(1) = x(1) + sample_time * (-omega0_sq * std::sin(x(0)) -
                                  damping * x(1) + input_gain * u(0));
    return xn;
  };
  sys.h = [](const Vector& x, const Vector&) {
    Vector y(1);
    y(0) = x(1);
    return y;
  };
  sys.scheduling = [](const Vector& x, const Vector&) {
    Vector p(1);
    p(0) = x(0) == 0.0 ? 1.0 : std::sin(x(0)) / x(0);
    return p;
  };
  return sys;
}

/// Output noise level: either an explicit standard deviation or an SNR target
/// resolved against a pilot noiseless run of the estimation split.
struct NoiseSpec {
  NoiseStructure structure = NoiseStructure::output_error;
  std::optional<double> snr_db;
  std::optional<double> sigma_e;
};

/// sigma_e achieving `snr_db` = 20 log10(std(h sequence) / sigma_e) on a
/// noiseless pilot simulation driven by `u`.
inline double solve_noise_std_for_snr(const NonlinearSystemDef& sys,
                                      const Matrix& u, double snr_db,
                                      double sample_time) {
  Rng unused(0);
  const DataSet pilot = simulate_system(sys, u, 0.0, unused, sample_time);
  const Eigen::RowVectorXd mean = pilot.y.colwise().mean();
  const double var =
      (pilot.y.rowwise() - mean).squaredNorm() / double(pilot.y.rows() - 1);
  return std::sqrt(var) / std::pow(10.0, snr_db / 20.0);
}

struct SplitSpec {
  int n_est = 0, n_val = 0, n_test = 0;
};

struct DataSplits {
  DataSet est, val, test;
};

/// Generates three independent realizations (fresh carrier frequency, fresh
/// input and output noise) with child seeds derived from the master seed and
/// the split role, so adding a split never perturbs the others. The noise
/// std is resolved once against the estimation split's pilot run; the
/// normalization statistics come from the estimation split and are copied to
/// the other two.
inline DataSplits split_dataset(const NonlinearSystemDef& sys,
                                ExcitationConfig excitation,
                                const NoiseSpec& noise, uint64_t master_seed,
                                const SplitSpec& sizes) {
  if (sizes.n_est < 2 || sizes.n_val < 2 || sizes.n_test < 1)
    throw ConfigError("split_dataset: split sizes too small");
  if (!noise.snr_db && !noise.sigma_e)
    throw ConfigError("split_dataset: need snr_db or sigma_e");

  auto make = [&](const char* role, int n, double sigma_e) {
    ExcitationConfig cfg = excitation;
    cfg.length = n;
    const uint64_t seed = derive_seed(master_seed, role);
    Rng rng(seed);
    const Matrix u = generate_excitation(cfg, rng, sys.n_u);
    DataSet ds = simulate_system(sys, u, sigma_e, rng, cfg.sample_time);
    ds.seed = seed;
    ds.role = role;
    return ds;
  };

  double sigma_e;
  if (noise.sigma_e) {
    sigma_e = *noise.sigma_e;
  } else {
    ExcitationConfig cfg = excitation;
    cfg.length = sizes.n_est;
    Rng rng(derive_seed(master_seed, "estimation"));
    const Matrix u_pilot = generate_excitation(cfg, rng, sys.n_u);
    sigma_e =
        solve_noise_std_for_snr(sys, u_pilot, *noise.snr_db, cfg.sample_time);
  }

  DataSplits out;
  out.est = make("estimation", sizes.n_est, sigma_e);
  out.val = make("validation", sizes.n_val, sigma_e);
  out.test = make("test", sizes.n_test, sigma_e);

  const Normalization stats = compute_normalization(out.est);
  for (DataSet* ds : {&out.est, &out.val, &out.test}) {
    ds->stats = stats;
    ds->has_stats = true;
  }
  return out;
}

}  // namespace lpvid

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Eigenvalues>
#include <optional>
#include <string>
#include <vector>

#include "lpvid/encoder.hpp"
#include "lpvid/errors.hpp"
#include "lpvid/mlp.hpp"
#include "lpvid/rng.hpp"

namespace lpvid {

enum class NoiseStructure { innovation, output_error };
enum class SchedulingMode { self_scheduled, external, oracle };

/// Rollout/simulation abort threshold on any normalized state component.
inline constexpr double kStateGuard = 1e6;

// ---------------------------------------------------------------------------
// Affine matrix functions M(p) = M0 + sum_i Mi p_i
// ---------------------------------------------------------------------------

struct AffineMatrixFunction {
  Matrix base;                 // M0
  std::vector<Matrix> coeffs;  // M1 .. M_np, each the same shape as M0

  Eigen::Index rows() const { return base.rows(); }
  Eigen::Index cols() const { return base.cols(); }
  int num_coeffs() const { return static_cast<int>(coeffs.size()); }

  static AffineMatrixFunction zero(Eigen::Index r, Eigen::Index c, int np) {
    AffineMatrixFunction m;
    m.base = Matrix::Zero(r, c);
    for (int i = 0; i < np; ++i) m.coeffs.push_back(Matrix::Zero(r, c));
    return m;
  }
};

inline Matrix affine_eval(const AffineMatrixFunction& m, const Vector& p) {
  if (p.size() != m.num_coeffs())
    throw DimensionError("affine_eval: p has " + std::to_string(p.size()) +
                         " entries, expected " + std::to_string(m.num_coeffs()));
  Matrix out = m.base;
  for (int i = 0; i < m.num_coeffs(); ++i) out += m.coeffs[i] * p(i);
  return out;
}

// ---------------------------------------------------------------------------
// Normalization statistics
// ---------------------------------------------------------------------------

struct ChannelStats {
  Vector mean;
  Vector stdev;
};

/// Per-channel standardization of u and y, fixed from the estimation split.
/// All signals are standardized before entering any network or matrix; the
/// transform is inverted on predicted outputs.
struct Normalization {
  ChannelStats u, y;

  static Normalization identity(int n_u, int n_y) {
    return Normalization{{Vector::Zero(n_u), Vector::Ones(n_u)},
                         {Vector::Zero(n_y), Vector::Ones(n_y)}};
  }

  Vector norm_u(const Vector& v) const {
    return (v - u.mean).cwiseQuotient(u.stdev);
  }
  Vector norm_y(const Vector& v) const {
    return (v - y.mean).cwiseQuotient(y.stdev);
  }
  Vector denorm_y(const Vector& v) const {
    return y.mean + v.cwiseProduct(y.stdev);
  }
  /// Row-per-sample matrix forms.
  Matrix norm_u_rows(const Matrix& m) const {
    return (m.rowwise() - u.mean.transpose()).array().rowwise() /
           u.stdev.transpose().array();
  }
  Matrix norm_y_rows(const Matrix& m) const {
    return (m.rowwise() - y.mean.transpose()).array().rowwise() /
           y.stdev.transpose().array();
  }
};

inline Vector concat_xu(const Vector& x, const Vector& u) {
  Vector z(x.size() + u.size());
  z.head(x.size()) = x;
  z.tail(u.size()) = u;
  return z;
}

inline Vector concat_xuy(const Vector& x, const Vector& u, const Vector& y) {
  Vector z(x.size() + u.size() + y.size());
  z.head(x.size()) = x;
  z.segment(x.size(), u.size()) = u;
  z.tail(y.size()) = y;
  return z;
}

// ---------------------------------------------------------------------------
// Model and scheduling net
// ---------------------------------------------------------------------------

/// Affine LPV state-space predictor. A, B, K depend on the x-partition of the
/// scheduling vector, C, D on the y-partition. Under output_error the K
/// coefficients are identically zero.
struct LpvSsModel {
  int n_x = 0, n_u = 0, n_y = 0;
  int n_p_x = 0, n_p_y = 0;
  NoiseStructure noise = NoiseStructure::output_error;
  AffineMatrixFunction A, B, C, D, K;
  Normalization stats;

  int n_p() const { return n_p_x + n_p_y; }
};

inline void validate_model(const LpvSsModel& m) {
  auto check = [](const AffineMatrixFunction& f, Eigen::Index r, Eigen::Index c,
                  int np, const char* name) {
    if (f.rows() != r || f.cols() != c || f.num_coeffs() != np)
      throw DimensionError(std::string("model: bad shape for ") + name);
    for (const auto& mi : f.coeffs)
      if (mi.rows() != r || mi.cols() != c)
        throw DimensionError(std::string("model: coefficient shape for ") + name);
  };
  check(m.A, m.n_x, m.n_x, m.n_p_x, "A");
  check(m.B, m.n_x, m.n_u, m.n_p_x, "B");
  check(m.C, m.n_y, m.n_x, m.n_p_y, "C");
  check(m.D, m.n_y, m.n_u, m.n_p_y, "D");
  check(m.K, m.n_x, m.n_y, m.n_p_x, "K");
  if (m.noise == NoiseStructure::output_error) {
    auto nonzero = [](const Matrix& v) {
      return v.size() > 0 && v.cwiseAbs().maxCoeff() != 0.0;
    };
    if (nonzero(m.K.base)) throw DimensionError("model: output_error requires K == 0");
    for (const auto& ki : m.K.coeffs)
      if (nonzero(ki)) throw DimensionError("model: output_error requires K == 0");
  }
}

/// Fresh model: A0 is a random matrix rescaled to spectral radius 0.9, B0 and
/// C0 are Glorot-uniform, D0, K and every p-coefficient start at zero, so the
/// initial predictor is a stable LTI system.
inline LpvSsModel init_lpv_model(int n_x, int n_u, int n_y, int n_p_x,
                                 int n_p_y, NoiseStructure noise,
                                 uint64_t seed) {
  if (n_x <= 0 || n_u <= 0 || n_y <= 0 || n_p_x < 0 || n_p_y < 0)
    throw DimensionError("init_lpv_model: bad dimensions");
  Rng rng(seed);
  LpvSsModel m;
  m.n_x = n_x;
  m.n_u = n_u;
  m.n_y = n_y;
  m.n_p_x = n_p_x;
  m.n_p_y = n_p_y;
  m.noise = noise;

  Matrix a0(n_x, n_x);
  for (Eigen::Index r = 0; r < n_x; ++r)
    for (Eigen::Index c = 0; c < n_x; ++c) a0(r, c) = rng.uniform(-1.0, 1.0);
  const double rho =
      Eigen::EigenSolver<Matrix>(a0).eigenvalues().cwiseAbs().maxCoeff();
  if (rho > 0.0) a0 *= 0.9 / rho;

  auto glorot = [&rng](Eigen::Index rows, Eigen::Index cols) {
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Matrix w(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) w(r, c) = rng.uniform(-limit, limit);
    return w;
  };

  m.A = AffineMatrixFunction::zero(n_x, n_x, n_p_x);
  m.A.base = a0;
  m.B = AffineMatrixFunction::zero(n_x, n_u, n_p_x);
  m.B.base = glorot(n_x, n_u);
  m.C = AffineMatrixFunction::zero(n_y, n_x, n_p_y);
  m.C.base = glorot(n_y, n_x);
  m.D = AffineMatrixFunction::zero(n_y, n_u, n_p_y);
  m.K = AffineMatrixFunction::zero(n_x, n_y, n_p_x);
  m.stats = Normalization::identity(n_u, n_y);
  return m;
}

/// Partitioned scheduling map. phi_x feeds A, B, K and sees (x, u, y) under
/// innovation noise but only (x, u) under output_error; phi_y feeds C, D and
/// never sees y. A partition of size zero has no network.
struct SchedulingNet {
  NoiseStructure noise = NoiseStructure::output_error;
  int n_p_x = 0, n_p_y = 0;
  std::optional<Mlp> phi_x;
  std::optional<Mlp> phi_y;

  int n_p() const { return n_p_x + n_p_y; }
};

inline SchedulingNet make_scheduling_net(const LpvSsModel& m,
                                         const std::vector<int>& hidden,
                                         uint64_t seed) {
  SchedulingNet s;
  s.noise = m.noise;
  s.n_p_x = m.n_p_x;
  s.n_p_y = m.n_p_y;
  const int x_in =
      m.n_x + m.n_u + (m.noise == NoiseStructure::innovation ? m.n_y : 0);
  if (m.n_p_x > 0) {
    std::vector<int> w{x_in};
    w.insert(w.end(), hidden.begin(), hidden.end());
    w.push_back(m.n_p_x);
    s.phi_x = mlp_init(w, /*with_bypass=*/true, derive_seed(seed, "phi_x"));
  }
  if (m.n_p_y > 0) {
    std::vector<int> w{m.n_x + m.n_u};
    w.insert(w.end(), hidden.begin(), hidden.end());
    w.push_back(m.n_p_y);
    s.phi_y = mlp_init(w, /*with_bypass=*/true, derive_seed(seed, "phi_y"));
  }
  return s;
}

/// p̂ = [p̂^x; p̂^y] evaluated in normalized coordinates. `y` must be present
/// exactly when the noise structure is innovation.
inline Vector scheduling_eval(const SchedulingNet& s, const Vector& x,
                              const Vector& u, const Vector* y) {
  if (s.noise == NoiseStructure::output_error && y != nullptr)
    throw DimensionError("scheduling_eval: y supplied in output_error mode");
  if (s.noise == NoiseStructure::innovation && y == nullptr)
    throw DimensionError("scheduling_eval: innovation mode requires y");
  if ((s.n_p_x > 0 && !s.phi_x) || (s.n_p_y > 0 && !s.phi_y))
    throw DimensionError("scheduling_eval: missing partition network");

  Vector p(s.n_p());
  if (s.phi_x)
    p.head(s.n_p_x) =
        mlp_forward(*s.phi_x, y ? concat_xuy(x, u, *y) : concat_xu(x, u));
  if (s.phi_y) p.tail(s.n_p_y) = mlp_forward(*s.phi_y, concat_xu(x, u));
  return p;
}

// ---------------------------------------------------------------------------
// One-step predictor
// ---------------------------------------------------------------------------

struct PredictorStepResult {
  Vector x_next;      // x̂_{k+1}, model coordinates
  Vector y_pred;      // ŷ_k, original units
  Vector innovation;  // ê_k = y_k - ŷ_k, original units
  Vector p;           // [p̂^x; p̂^y]
};

namespace detail {

struct StepOut {
  Vector x_next;
  Vector y_pred_norm;
  Vector e_norm;  // normalized innovation actually fed to K
};

/// Core recursion in normalized coordinates. `y_norm == nullptr` forces
/// ê = 0 (simulation semantics).
inline StepOut step_with_p(const LpvSsModel& m, const Vector& px,
                           const Vector& py, const Vector& x,
                           const Vector& u_norm, const Vector* y_norm) {
  StepOut out;
  out.y_pred_norm = affine_eval(m.C, py) * x + affine_eval(m.D, py) * u_norm;
  out.e_norm = y_norm ? Vector(*y_norm - out.y_pred_norm)
                      : Vector(Vector::Zero(m.n_y));
  out.x_next = affine_eval(m.A, px) * x + affine_eval(m.B, px) * u_norm +
               affine_eval(m.K, px) * out.e_norm;
  return out;
}

inline void check_state(const Vector& x, long step) {
  if (!x.allFinite() || x.cwiseAbs().maxCoeff() > kStateGuard)
    throw DivergenceError("state diverged at step " + std::to_string(step),
                          step);
}

}  // namespace detail

/// One predictor step. `u` and `y` are in original units; ŷ and ê are
/// returned in original units, the state stays in model coordinates.
inline PredictorStepResult predictor_step(const LpvSsModel& m,
                                          const SchedulingNet& s,
                                          const Vector& x, const Vector& u,
                                          const Vector& y) {
  if (x.size() != m.n_x || u.size() != m.n_u || y.size() != m.n_y)
    throw DimensionError("predictor_step: dimension mismatch");
  const Vector un = m.stats.norm_u(u);
  const Vector yn = m.stats.norm_y(y);
  const Vector p = scheduling_eval(
      s, x, un, m.noise == NoiseStructure::innovation ? &yn : nullptr);

  const auto step =
      detail::step_with_p(m, p.head(m.n_p_x), p.tail(m.n_p_y), x, un, &yn);
  detail::check_state(step.x_next, 0);

  PredictorStepResult r;
  r.x_next = step.x_next;
  r.y_pred = m.stats.denorm_y(step.y_pred_norm);
  r.innovation = y - r.y_pred;
  r.p = p;
  return r;
}

// ---------------------------------------------------------------------------
// Rollout over a data window (prediction semantics)
// ---------------------------------------------------------------------------

/// Window of n+T consecutive samples t-n .. t+T-1 (original units), plus the
/// oracle scheduling rows t .. t+T-1 when present.
struct DataWindow {
  Matrix u;  // (lag+T) x n_u
  Matrix y;  // (lag+T) x n_y
  Matrix p;  // T x n_p, oracle mode only (may be 0x0 otherwise)
  int lag = 0;
};

struct RolloutResult {
  Matrix y_pred;  // T x n_y, original units
  Matrix x_traj;  // (T+1) x n_x: x̂_{t|t} .. x̂_{t+T|t}
  Matrix p_traj;  // T x n_p
};

/// T-step prediction rollout initialized by the encoder (or starting from
/// zero in encoderless oracle runs). In self_scheduled mode the propagated
/// model state feeds the p-net; in external mode the encoder is re-applied to
/// the shifted measured window at every step and only its output feeds the
/// p-net, while the model state still propagates through the state equation.
inline RolloutResult rollout(const LpvSsModel& m, const SchedulingNet* sched,
                             const EncoderNet* enc, SchedulingMode mode,
                             const DataWindow& w, int T) {
  if (T < 1) throw DimensionError("rollout: T must be >= 1");
  if (mode != SchedulingMode::oracle &&
      ((sched == nullptr && m.n_p() > 0) || enc == nullptr))
    throw DimensionError("rollout: mode requires scheduling net and encoder");
  if (enc && enc->lag != w.lag)
    throw DimensionError("rollout: window lag does not match encoder lag");
  const int lag = w.lag;
  if (w.u.rows() != w.y.rows() || w.u.rows() < lag + T)
    throw DimensionError("rollout: window shorter than n+T");
  if (w.u.cols() != m.n_u || w.y.cols() != m.n_y)
    throw DimensionError("rollout: channel mismatch");
  if (mode == SchedulingMode::oracle &&
      (w.p.rows() < T || w.p.cols() != m.n_p()))
    throw DimensionError("rollout: oracle mode requires T scheduling rows");

  const Matrix un = m.stats.norm_u_rows(w.u);
  const Matrix yn = m.stats.norm_y_rows(w.y);
  const bool innov = m.noise == NoiseStructure::innovation;

  auto window_at = [&](int first) {
    return LagWindow{un.middleRows(first, lag + 1),
                     yn.middleRows(first, lag + 1)};
  };

  Vector x = enc ? encode(*enc, window_at(0)) : Vector(Vector::Zero(m.n_x));

  RolloutResult r;
  r.y_pred.resize(T, m.n_y);
  r.x_traj.resize(T + 1, m.n_x);
  r.p_traj.resize(T, m.n_p());
  r.x_traj.row(0) = x.transpose();

  for (int k = 0; k < T; ++k) {
    const int s = lag + k;
    const Vector u_k = un.row(s).transpose();
    const Vector y_k = yn.row(s).transpose();

    Vector p(m.n_p());
    switch (mode) {
      case SchedulingMode::oracle:
        p = w.p.row(k).transpose();
        break;
      case SchedulingMode::self_scheduled:
        if (sched) p = scheduling_eval(*sched, x, u_k, innov ? &y_k : nullptr);
        break;
      case SchedulingMode::external: {
        const Vector x_enc = encode(*enc, window_at(k));
        if (sched)
          p = scheduling_eval(*sched, x_enc, u_k, innov ? &y_k : nullptr);
        break;
      }
    }

    const auto step = detail::step_with_p(m, p.head(m.n_p_x), p.tail(m.n_p_y),
                                          x, u_k, &y_k);
    detail::check_state(step.x_next, k);

    r.y_pred.row(k) = m.stats.denorm_y(step.y_pred_norm).transpose();
    r.p_traj.row(k) = p.transpose();
    x = step.x_next;
    r.x_traj.row(k + 1) = x.transpose();
  }
  return r;
}

// ---------------------------------------------------------------------------
// Free-run simulation (ê forced to zero)
// ---------------------------------------------------------------------------

struct SimulationResult {
  Matrix y_sim;   // one row per simulated sample, original units
  Matrix x_traj;  // one more row than y_sim
  Matrix p_traj;
  int start_row = 0;  // input row of the first simulated sample
};

/// Free-run response with the innovation forced to zero, so the K branch is
/// inactive regardless of the noise structure.
///
/// self_scheduled: simulates every row of `u` from state `x0` at row 0; no
///   measured output is consumed (under innovation noise the p-net's y input
///   is fed the model's own normalized prediction).
/// oracle: like self_scheduled but scheduling rows come from `p`.
/// external: requires the measured `y`; `x0` is the model state at row `lag`
///   and outputs start there, since each step's scheduling state comes from
///   the encoder applied to the trailing measured window.
inline SimulationResult simulate(const LpvSsModel& m, const SchedulingNet* sched,
                                 const EncoderNet* enc, SchedulingMode mode,
                                 const Matrix& u, const Vector& x0,
                                 const Matrix* y = nullptr,
                                 const Matrix* p = nullptr) {
  if (u.cols() != m.n_u)
    throw DimensionError("simulate: input channel mismatch");
  if (x0.size() != m.n_x) throw DimensionError("simulate: bad initial state");
  const Eigen::Index N = u.rows();
  const bool innov = m.noise == NoiseStructure::innovation;

  Eigen::Index start = 0;
  if (mode == SchedulingMode::external) {
    if (sched == nullptr || enc == nullptr || y == nullptr ||
        y->rows() != N || y->cols() != m.n_y)
      throw DimensionError("simulate: external mode needs sched, encoder and y");
    start = enc->lag;
    if (N <= start) throw DimensionError("simulate: sequence shorter than lag");
  } else if (mode == SchedulingMode::oracle) {
    if (p == nullptr || p->rows() != N || p->cols() != m.n_p())
      throw DimensionError("simulate: oracle mode needs a full p sequence");
  } else if (sched == nullptr && m.n_p() > 0) {
    throw DimensionError("simulate: scheduling net required");
  }

  const Matrix un = m.stats.norm_u_rows(u);
  Matrix yn;
  if (mode == SchedulingMode::external) yn = m.stats.norm_y_rows(*y);

  const Eigen::Index steps = N - start;
  SimulationResult r;
  r.start_row = static_cast<int>(start);
  r.y_sim.resize(steps, m.n_y);
  r.x_traj.resize(steps + 1, m.n_x);
  r.p_traj.resize(steps, m.n_p());

  Vector x = x0;
  r.x_traj.row(0) = x.transpose();
  for (Eigen::Index k = 0; k < steps; ++k) {
    const Eigen::Index s = start + k;
    const Vector u_k = un.row(s).transpose();

    Vector px(0), py(0), yhat_n;
    if (mode == SchedulingMode::oracle) {
      px = p->row(s).head(m.n_p_x).transpose();
      py = p->row(s).tail(m.n_p_y).transpose();
      yhat_n = affine_eval(m.C, py) * x + affine_eval(m.D, py) * u_k;
    } else {
      const Vector* sx = &x;
      Vector x_enc;
      if (mode == SchedulingMode::external) {
        x_enc = encode(*enc,
                       LagWindow{un.middleRows(s - enc->lag, enc->lag + 1),
                                 yn.middleRows(s - enc->lag, enc->lag + 1)});
        sx = &x_enc;
      }
      // p̂^y never depends on y, so ŷ is well defined before p̂^x.
      if (sched && sched->phi_y)
        py = mlp_forward(*sched->phi_y, concat_xu(*sx, u_k));
      yhat_n = affine_eval(m.C, py) * x + affine_eval(m.D, py) * u_k;
      if (sched && sched->phi_x) {
        if (innov) {
          const Vector y_in = mode == SchedulingMode::external
                                  ? Vector(yn.row(s).transpose())
                                  : yhat_n;
          px = mlp_forward(*sched->phi_x, concat_xuy(*sx, u_k, y_in));
        } else {
          px = mlp_forward(*sched->phi_x, concat_xu(*sx, u_k));
        }
      }
    }

    Vector x_next = affine_eval(m.A, px) * x + affine_eval(m.B, px) * u_k;
    detail::check_state(x_next, static_cast<long>(s));

    r.y_sim.row(k) = m.stats.denorm_y(yhat_n).transpose();
    r.p_traj.row(k).head(m.n_p_x) = px.transpose();
    r.p_traj.row(k).tail(m.n_p_y) = py.transpose();
    x = x_next;
    r.x_traj.row(k + 1) = x.transpose();
  }
  return r;
}

}  // namespace lpvid

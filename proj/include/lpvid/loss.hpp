// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <exception>
#include <span>
#include <thread>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "lpvid/autodiff.hpp"
#include "lpvid/dataset.hpp"
#include "lpvid/lpv_model.hpp"
#include "lpvid/params.hpp"
#include "lpvid/rng.hpp"

namespace lpvid {

// ---------------------------------------------------------------------------
// Batch specification and sampling
// ---------------------------------------------------------------------------

/// A set of subsection anchors plus the truncation length. Anchors are
/// 0-based sample indices t with a full lag window behind them and a full
/// T-step horizon ahead: t in [lag, N-T].
struct BatchSpec {
  std::vector<int> anchors;
  int truncation = 0;

  int size() const { return static_cast<int>(anchors.size()); }
};

inline int admissible_count(int N, int T, int lag) { return N - T - lag + 1; }

inline std::vector<int> admissible_anchors(int N, int T, int lag) {
  const int m = admissible_count(N, T, lag);
  if (T < 1 || m < 1)
    throw DimensionError("admissible_anchors: no admissible subsection starts");
  std::vector<int> a(m);
  for (int i = 0; i < m; ++i) a[i] = lag + i;
  return a;
}

namespace detail {
inline void shuffle_in_place(std::vector<int>& v, Rng& rng) {
  for (size_t i = v.size(); i > 1; --i)
    std::swap(v[i - 1], v[rng.uniform_int(i)]);
}
}  // namespace detail

/// One uniform draw of `batch_size` anchors without replacement.
inline BatchSpec sample_batch(Rng& rng, int N, int T, int lag, int batch_size) {
  std::vector<int> pool = admissible_anchors(N, T, lag);
  if (batch_size < 1 || batch_size > static_cast<int>(pool.size()))
    throw DimensionError("sample_batch: infeasible batch size");
  BatchSpec b;
  b.truncation = T;
  b.anchors.reserve(batch_size);
  for (int i = 0; i < batch_size; ++i) {
    const size_t j = i + rng.uniform_int(pool.size() - i);
    std::swap(pool[i], pool[j]);
    b.anchors.push_back(pool[i]);
  }
  return b;
}

/// Stateful batch sampler: each epoch is a fresh shuffle of the admissible
/// set, so every anchor is visited once before any repeats. Batches never
/// contain duplicates even across an epoch boundary (clashing anchors are
/// deferred to the next batch).
class BatchSampler {
 public:
  BatchSampler(uint64_t seed, int N, int T, int lag)
      : rng_(seed), N_(N), T_(T), lag_(lag) {
    (void)admissible_anchors(N, T, lag);  // validate feasibility
  }

  int truncation() const { return T_; }

  BatchSpec next(int batch_size) {
    const int m = admissible_count(N_, T_, lag_);
    if (batch_size < 1 || batch_size > m)
      throw DimensionError("BatchSampler: infeasible batch size");
    BatchSpec b;
    b.truncation = T_;
    b.anchors.reserve(batch_size);
    std::unordered_set<int> taken;
    std::vector<int> deferred;
    while (static_cast<int>(b.anchors.size()) < batch_size) {
      if (pos_ == queue_.size()) refill();
      const int a = queue_[pos_++];
      if (taken.count(a)) {
        deferred.push_back(a);
      } else {
        taken.insert(a);
        b.anchors.push_back(a);
      }
    }
    if (!deferred.empty())
      queue_.insert(queue_.begin() + pos_, deferred.begin(), deferred.end());
    return b;
  }

 private:
  void refill() {
    queue_.erase(queue_.begin(), queue_.begin() + pos_);
    pos_ = 0;
    std::vector<int> epoch = admissible_anchors(N_, T_, lag_);
    detail::shuffle_in_place(epoch, rng_);
    queue_.insert(queue_.end(), epoch.begin(), epoch.end());
  }

  Rng rng_;
  int N_, T_, lag_;
  std::vector<int> queue_;
  size_t pos_ = 0;
};

// ---------------------------------------------------------------------------
// Loss values (plain evaluation path)
// ---------------------------------------------------------------------------

namespace detail {

inline int loss_lag(const EncoderNet* enc) { return enc ? enc->lag : 0; }

inline DataWindow make_window(const DataSet& ds, int anchor, int T, int lag,
                              bool with_p) {
  DataWindow w;
  w.lag = lag;
  w.u = ds.u.middleRows(anchor - lag, lag + T);
  w.y = ds.y.middleRows(anchor - lag, lag + T);
  if (with_p) {
    if (!ds.has_oracle_p())
      throw DimensionError("oracle mode: dataset has no scheduling columns");
    w.p = ds.p.middleRows(anchor, T);
  }
  return w;
}

}  // namespace detail

/// Mean squared prediction error over the sampled subsections:
/// (1 / (T * |I|)) * sum_{t in I} sum_{k < T} ||y_{t+k} - ŷ_{t+k|t}||^2.
inline double batch_loss(const LpvSsModel& m, const SchedulingNet* sched,
                         const EncoderNet* enc, const DataSet& ds,
                         const BatchSpec& batch, SchedulingMode mode) {
  if (batch.anchors.empty()) throw DimensionError("batch_loss: empty batch");
  const int T = batch.truncation;
  if (T < 1) throw DimensionError("batch_loss: T must be >= 1");
  const int lag = detail::loss_lag(enc);
  double acc = 0.0;
  for (int a : batch.anchors) {
    if (a < lag || a + T > ds.n())
      throw DimensionError("batch_loss: anchor out of admissible range");
    const DataWindow w =
        detail::make_window(ds, a, T, lag, mode == SchedulingMode::oracle);
    const RolloutResult r = rollout(m, sched, enc, mode, w, T);
    for (int k = 0; k < T; ++k)
      acc += (ds.y.row(a + k) - r.y_pred.row(k)).squaredNorm();
  }
  return acc / (static_cast<double>(T) * batch.size());
}

/// Truncated prediction cost over every admissible subsection.
inline double truncated_loss(const LpvSsModel& m, const SchedulingNet* sched,
                             const EncoderNet* enc, const DataSet& ds, int T,
                             SchedulingMode mode) {
  BatchSpec all;
  all.truncation = T;
  all.anchors = admissible_anchors(ds.n(), T, detail::loss_lag(enc));
  return batch_loss(m, sched, enc, ds, all, mode);
}

/// Prediction cost of one rollout spanning the whole admissible range,
/// initialized by the encoder at the first admissible index.
inline double full_prediction_loss(const LpvSsModel& m,
                                   const SchedulingNet* sched,
                                   const EncoderNet* enc, const DataSet& ds,
                                   SchedulingMode mode) {
  const int lag = detail::loss_lag(enc);
  const int span = ds.n() - lag;
  if (span < 2)
    throw DimensionError("full_prediction_loss: dataset shorter than n+2");
  BatchSpec one;
  one.truncation = span;
  one.anchors = {lag};
  return batch_loss(m, sched, enc, ds, one, mode);
}

// ---------------------------------------------------------------------------
// Loss gradients (batched tape path)
// ---------------------------------------------------------------------------

struct LossValueAndGrads {
  double value = 0.0;
  std::vector<Matrix> grads;  // aligned with the ParamRegistry entries
};

namespace detail {

/// Normalized signals laid out one column per sample.
struct NormData {
  Matrix u;  // n_u x N
  Matrix y;  // n_y x N
  Matrix p;  // n_p x N (oracle scheduling, raw)
};

inline NormData make_norm_data(const LpvSsModel& m, const DataSet& ds,
                               bool need_p) {
  NormData d;
  d.u = m.stats.norm_u_rows(ds.u).transpose();
  d.y = m.stats.norm_y_rows(ds.y).transpose();
  if (need_p) {
    if (!ds.has_oracle_p())
      throw DimensionError("oracle mode: dataset has no scheduling columns");
    d.p = ds.p.transpose();
  }
  return d;
}

struct AffineLeaves {
  int base = -1;
  std::vector<int> coeffs;
};

struct TapeLeaves {
  AffineLeaves A, B, C, D, K;
  bool has_k = false;
  std::optional<MlpLeaves> phi_x, phi_y;
  std::optional<MlpLeaves> enc;
  std::vector<int> ordered;  // same order as collect_parameters
};

inline AffineLeaves affine_leaves(Tape& t, const AffineMatrixFunction& f,
                                  std::vector<int>& ordered) {
  AffineLeaves l;
  l.base = t.leaf(f.base);
  ordered.push_back(l.base);
  for (const auto& c : f.coeffs) {
    l.coeffs.push_back(t.leaf(c));
    ordered.push_back(l.coeffs.back());
  }
  return l;
}

inline MlpLeaves mlp_leaves_ordered(Tape& t, const Mlp& net,
                                    std::vector<int>& ordered) {
  MlpLeaves l;
  for (size_t i = 0; i < net.weights.size(); ++i) {
    l.weights.push_back(t.leaf(net.weights[i]));
    ordered.push_back(l.weights.back());
    l.biases.push_back(t.leaf(net.biases[i]));
    ordered.push_back(l.biases.back());
  }
  if (net.bypass) {
    l.bypass = t.leaf(*net.bypass);
    ordered.push_back(l.bypass);
  }
  return l;
}

/// Registers every trainable matrix as a tape leaf in registry order.
inline TapeLeaves make_leaves(Tape& t, const LpvSsModel& m,
                              const SchedulingNet* sched,
                              const EncoderNet* enc) {
  TapeLeaves l;
  l.A = affine_leaves(t, m.A, l.ordered);
  l.B = affine_leaves(t, m.B, l.ordered);
  l.C = affine_leaves(t, m.C, l.ordered);
  l.D = affine_leaves(t, m.D, l.ordered);
  if (m.noise == NoiseStructure::innovation) {
    l.K = affine_leaves(t, m.K, l.ordered);
    l.has_k = true;
  }
  if (sched) {
    if (sched->phi_x) l.phi_x = mlp_leaves_ordered(t, *sched->phi_x, l.ordered);
    if (sched->phi_y) l.phi_y = mlp_leaves_ordered(t, *sched->phi_y, l.ordered);
  }
  if (enc) l.enc = mlp_leaves_ordered(t, enc->net, l.ordered);
  return l;
}

/// Shared per-chunk constants: broadcast helpers and the output scale.
struct BuildCtx {
  int cols = 0;
  int ones_row = -1;                       // 1 x cols
  std::unordered_map<int, int> ones_col;   // rows -> (rows x 1) node
  int y_scale = -1;                        // diag(y stdev), n_y x n_y
};

inline int ones_col(Tape& t, BuildCtx& ctx, int rows) {
  auto it = ctx.ones_col.find(rows);
  if (it != ctx.ones_col.end()) return it->second;
  const int id = t.constant(Matrix::Ones(rows, 1));
  ctx.ones_col.emplace(rows, id);
  return id;
}

/// Broadcasts row i of P (np x cols) to a (rows x cols) factor.
inline int broadcast_row(Tape& t, BuildCtx& ctx, int P, int np, int i,
                         int rows) {
  Matrix sel = Matrix::Zero(1, np);
  sel(0, i) = 1.0;
  const int row = t.matmul(t.constant(std::move(sel)), P);
  return t.matmul(ones_col(t, ctx, rows), row);
}

/// M(p) X for a whole batch column block:
/// matmul(M0, X) + sum_i mul(matmul(Mi, X), broadcast(P row i)).
/// `bcast` caches the broadcast factors so A, B, K share them.
inline int affine_apply(Tape& t, BuildCtx& ctx, const AffineLeaves& M, int P,
                        int X, std::vector<int>& bcast) {
  int out = t.matmul(M.base, X);
  const int np = static_cast<int>(M.coeffs.size());
  if (np == 0) return out;
  const int rows = static_cast<int>(t.value(out).rows());
  if (bcast.empty()) {
    for (int i = 0; i < np; ++i)
      bcast.push_back(broadcast_row(t, ctx, P, np, i, rows));
  }
  for (int i = 0; i < np; ++i)
    out = t.add(out, t.mul(t.matmul(M.coeffs[i], X), bcast[i]));
  return out;
}

/// Gathers the flattened encoder windows ending at anchor+offset for every
/// anchor into one (d x cols) constant, matching flatten_window's order.
inline int gather_encoder_input(Tape& t, const NormData& d,
                                std::span<const int> anchors, int offset,
                                int lag) {
  const int n_u = static_cast<int>(d.u.rows());
  const int n_y = static_cast<int>(d.y.rows());
  const int cols = static_cast<int>(anchors.size());
  Matrix z((lag + 1) * (n_u + n_y), cols);
  for (int j = 0; j < cols; ++j) {
    const int first = anchors[j] + offset - lag;
    Eigen::Index r = 0;
    for (int s = 0; s <= lag; ++s) {
      z.block(r, j, n_u, 1) = d.u.col(first + s);
      r += n_u;
    }
    for (int s = 0; s <= lag; ++s) {
      z.block(r, j, n_y, 1) = d.y.col(first + s);
      r += n_y;
    }
  }
  return t.constant(std::move(z));
}

inline int gather_columns(Tape& t, const Matrix& src,
                          std::span<const int> anchors, int offset) {
  Matrix out(src.rows(), static_cast<Eigen::Index>(anchors.size()));
  for (size_t j = 0; j < anchors.size(); ++j)
    out.col(j) = src.col(anchors[j] + offset);
  return t.constant(std::move(out));
}

/// Builds the unscaled sum of squared output residuals (original units) over
/// `anchors` x T steps. Returns the scalar node; leaves come back through
/// `leaves`. Throws DivergenceError if a propagated state leaves the guard
/// region.
inline int build_chunk_loss(Tape& t, const LpvSsModel& m,
                            const SchedulingNet* sched, const EncoderNet* enc,
                            const NormData& d, std::span<const int> anchors,
                            int T, SchedulingMode mode, TapeLeaves& leaves) {
  const bool innov = m.noise == NoiseStructure::innovation;
  const int lag = enc ? enc->lag : 0;
  const int cols = static_cast<int>(anchors.size());

  leaves = make_leaves(t, m, sched, enc);
  BuildCtx ctx;
  ctx.cols = cols;
  ctx.ones_row = t.constant(Matrix::Ones(1, cols));
  ctx.y_scale = t.constant(Matrix(m.stats.y.stdev.asDiagonal()));

  // Initial state from the encoder (or zero in encoderless oracle runs).
  int X;
  if (enc) {
    const int z0 = gather_encoder_input(t, d, anchors, 0, lag);
    X = mlp_forward_graph(t, *leaves.enc, z0, ctx.ones_row);
  } else {
    X = t.constant(Matrix::Zero(m.n_x, cols));
  }

  int loss_acc = -1;
  for (int k = 0; k < T; ++k) {
    const int U = gather_columns(t, d.u, anchors, k);
    const int Y = gather_columns(t, d.y, anchors, k);

    // Scheduling partitions for this step.
    int PX = -1, PY = -1;
    if (mode == SchedulingMode::oracle) {
      Matrix pall(m.n_p(), cols);
      for (int j = 0; j < cols; ++j) pall.col(j) = d.p.col(anchors[j] + k);
      if (m.n_p_x > 0) PX = t.constant(pall.topRows(m.n_p_x));
      if (m.n_p_y > 0) PY = t.constant(pall.bottomRows(m.n_p_y));
    } else {
      int SX = X;
      if (mode == SchedulingMode::external) {
        const int ze = gather_encoder_input(t, d, anchors, k, lag);
        SX = mlp_forward_graph(t, *leaves.enc, ze, ctx.ones_row);
      }
      if (leaves.phi_x) {
        const int zx = innov ? t.concat({SX, U, Y}) : t.concat({SX, U});
        PX = mlp_forward_graph(t, *leaves.phi_x, zx, ctx.ones_row);
      }
      if (leaves.phi_y) {
        const int zy = t.concat({SX, U});
        PY = mlp_forward_graph(t, *leaves.phi_y, zy, ctx.ones_row);
      }
    }

    std::vector<int> bcast_x, bcast_y;
    const int Yhat = t.add(affine_apply(t, ctx, leaves.C, PY, X, bcast_y),
                           affine_apply(t, ctx, leaves.D, PY, U, bcast_y));
    const int E = t.sub(Y, Yhat);

    const int resid = t.matmul(ctx.y_scale, E);
    const int term = t.sum(t.square(resid));
    loss_acc = loss_acc < 0 ? term : t.add(loss_acc, term);

    int Xn = t.add(affine_apply(t, ctx, leaves.A, PX, X, bcast_x),
                   affine_apply(t, ctx, leaves.B, PX, U, bcast_x));
    if (leaves.has_k)
      Xn = t.add(Xn, affine_apply(t, ctx, leaves.K, PX, E, bcast_x));

    const Matrix& xv = t.value(Xn);
    if (!xv.allFinite() || xv.cwiseAbs().maxCoeff() > kStateGuard)
      throw DivergenceError("batch rollout diverged at step " +
                                std::to_string(k),
                            k);
    X = Xn;
  }
  return loss_acc;
}

struct ChunkResult {
  double sum = 0.0;
  std::vector<Matrix> grads;
};

inline ChunkResult run_chunk(const LpvSsModel& m, const SchedulingNet* sched,
                             const EncoderNet* enc, const NormData& d,
                             std::span<const int> anchors, int T,
                             SchedulingMode mode) {
  Tape tape;
  TapeLeaves leaves;
  const int root = build_chunk_loss(tape, m, sched, enc, d, anchors, T, mode,
                                    leaves);
  tape.backward(root);
  ChunkResult r;
  r.sum = tape.value(root)(0, 0);
  r.grads.reserve(leaves.ordered.size());
  for (int id : leaves.ordered) r.grads.push_back(tape.grad(id));
  return r;
}

}  // namespace detail

/// Batch loss and its gradients w.r.t. every registry entry, computed on one
/// reverse-mode tape per chunk. With threads > 1 the batch is split into
/// contiguous chunks evaluated concurrently; the reduction always runs in
/// chunk order, so a given thread count is bit-reproducible (threads = 1 is
/// the reference order).
inline LossValueAndGrads batch_loss_gradients(
    const LpvSsModel& m, const SchedulingNet* sched, const EncoderNet* enc,
    const DataSet& ds, const BatchSpec& batch, SchedulingMode mode,
    const ParamRegistry& registry, int threads = 1) {
  if (batch.anchors.empty())
    throw DimensionError("batch_loss_gradients: empty batch");
  const int T = batch.truncation;
  if (T < 1) throw DimensionError("batch_loss_gradients: T must be >= 1");
  const int lag = detail::loss_lag(enc);
  for (int a : batch.anchors)
    if (a < lag || a + T > ds.n())
      throw DimensionError("batch_loss_gradients: anchor out of range");

  const detail::NormData nd =
      detail::make_norm_data(m, ds, mode == SchedulingMode::oracle);

  const int B = batch.size();
  const int n_chunks = std::clamp(threads, 1, B);
  std::vector<std::pair<int, int>> ranges;  // offset, length
  const int base = B / n_chunks, extra = B % n_chunks;
  for (int c = 0, off = 0; c < n_chunks; ++c) {
    const int len = base + (c < extra ? 1 : 0);
    ranges.emplace_back(off, len);
    off += len;
  }

  std::vector<detail::ChunkResult> results(n_chunks);
  std::vector<std::exception_ptr> errors(n_chunks);
  auto work = [&](int c) {
    try {
      std::span<const int> part(batch.anchors.data() + ranges[c].first,
                                static_cast<size_t>(ranges[c].second));
      results[c] = detail::run_chunk(m, sched, enc, nd, part, T, mode);
    } catch (...) {
      errors[c] = std::current_exception();
    }
  };
  if (n_chunks == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n_chunks);
    for (int c = 0; c < n_chunks; ++c) pool.emplace_back(work, c);
    for (auto& th : pool) th.join();
  }
  for (int c = 0; c < n_chunks; ++c)
    if (errors[c]) std::rethrow_exception(errors[c]);

  if (!results.empty() && results[0].grads.size() != registry.count())
    throw DimensionError("batch_loss_gradients: registry/graph mismatch");

  LossValueAndGrads out;
  out.grads = std::move(results[0].grads);
  out.value = results[0].sum;
  for (int c = 1; c < n_chunks; ++c) {
    out.value += results[c].sum;
    for (size_t i = 0; i < out.grads.size(); ++i)
      out.grads[i] += results[c].grads[i];
  }
  const double scale = 1.0 / (static_cast<double>(T) * B);
  out.value *= scale;
  for (auto& g : out.grads) g *= scale;
  return out;
}

}  // namespace lpvid

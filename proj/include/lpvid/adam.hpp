// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <vector>

#include "lpvid/params.hpp"

namespace lpvid {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<Matrix> m;  // first moments, aligned with the registry
  std::vector<Matrix> v;  // second moments
  long t = 0;             // completed updates (for bias correction)
};

inline AdamState make_adam_state(const ParamRegistry& reg) {
  AdamState s;
  for (const auto& e : reg.entries) {
    s.m.push_back(Matrix::Zero(e.value->rows(), e.value->cols()));
    s.v.push_back(Matrix::Zero(e.value->rows(), e.value->cols()));
  }
  return s;
}

/// One Adam update with bias correction (denominator sqrt(v̂) + eps).
/// A non-finite gradient skips the update entirely (state untouched) and
/// returns false so the caller can record the event.
inline bool adam_step(ParamRegistry& params, const std::vector<Matrix>& grads,
                      AdamState& state, const AdamConfig& cfg) {
  if (grads.size() != params.count() || state.m.size() != params.count())
    throw DimensionError("adam_step: gradient/state layout mismatch");
  for (const auto& g : grads)
    if (!g.allFinite()) return false;

  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (size_t i = 0; i < grads.size(); ++i) {
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grads[i];
    state.v[i] =
        cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grads[i].cwiseProduct(grads[i]);
    const Matrix m_hat = state.m[i] / bc1;
    const Matrix v_hat = state.v[i] / bc2;
    *params.entries[i].value -=
        cfg.learning_rate *
        (m_hat.array() / (v_hat.array().sqrt() + cfg.epsilon)).matrix();
  }
  return true;
}

}  // namespace lpvid

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "lpvid/mlp.hpp"

namespace lpvid {

/// Lag window of the n+1 most recent samples (t-n .. t), one row per sample,
/// in the model's normalized coordinates.
struct LagWindow {
  Matrix u;  // (n+1) x n_u
  Matrix y;  // (n+1) x n_y
};

/// Sub-space encoder: maps a lag window of past I/O to the model state at the
/// window's last sample. The net input is the flattened window
/// [u_{t-n} .. u_t, y_{t-n} .. y_t]; output dimension is n_x.
struct EncoderNet {
  int lag = 0;  // n
  Mlp net;
};

inline EncoderNet make_encoder(int n_x, int n_u, int n_y, int lag,
                               const std::vector<int>& hidden, uint64_t seed) {
  if (lag < 0) throw DimensionError("make_encoder: negative lag");
  std::vector<int> widths;
  widths.push_back((lag + 1) * (n_u + n_y));
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(n_x);
  return EncoderNet{lag, mlp_init(widths, /*with_bypass=*/true, seed)};
}

/// Flattening order: all u samples oldest-first, then all y samples.
inline Vector flatten_window(const LagWindow& w) {
  Vector z(w.u.size() + w.y.size());
  Eigen::Index k = 0;
  for (Eigen::Index r = 0; r < w.u.rows(); ++r)
    for (Eigen::Index c = 0; c < w.u.cols(); ++c) z(k++) = w.u(r, c);
  for (Eigen::Index r = 0; r < w.y.rows(); ++r)
    for (Eigen::Index c = 0; c < w.y.cols(); ++c) z(k++) = w.y(r, c);
  return z;
}

/// x̂_{t|t} from the window ending at t. Pure function of (parameters, window).
inline Vector encode(const EncoderNet& enc, const LagWindow& w) {
  if (w.u.rows() != enc.lag + 1 || w.y.rows() != enc.lag + 1)
    throw DimensionError("encode: window must hold exactly n+1 samples");
  return mlp_forward(enc.net, flatten_window(w));
}

}  // namespace lpvid

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "lpvid/autodiff.hpp"
#include "lpvid/errors.hpp"
#include "lpvid/rng.hpp"

namespace lpvid {

/// Fully connected network: tanh hidden layers, affine output layer and an
/// optional linear bypass from the input straight to the output.
struct Mlp {
  std::vector<int> widths;       // [d_in, h_1 .. h_q, d_out]
  std::vector<Matrix> weights;   // weights[i]: widths[i+1] x widths[i]
  std::vector<Matrix> biases;    // biases[i]: widths[i+1] x 1
  std::optional<Matrix> bypass;  // d_out x d_in, no bias of its own

  int input_dim() const { return widths.front(); }
  int output_dim() const { return widths.back(); }
  int num_layers() const { return static_cast<int>(weights.size()); }
};

/// Glorot-uniform weights, zero biases, zero bypass. Reproducible given seed.
inline Mlp mlp_init(const std::vector<int>& widths, bool with_bypass,
                    uint64_t seed) {
  if (widths.size() < 2)
    throw DimensionError("mlp_init: need at least [d_in, d_out]");
  for (int w : widths)
    if (w <= 0) throw DimensionError("mlp_init: widths must be positive");

  Rng rng(seed);
  Mlp net;
  net.widths = widths;
  for (size_t i = 0; i + 1 < widths.size(); ++i) {
    const int fan_in = widths[i], fan_out = widths[i + 1];
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    Matrix w(fan_out, fan_in);
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c)
        w(r, c) = rng.uniform(-limit, limit);
    net.weights.push_back(std::move(w));
    net.biases.push_back(Matrix::Zero(fan_out, 1));
  }
  if (with_bypass)
    net.bypass = Matrix::Zero(widths.back(), widths.front());
  return net;
}

/// z_i = tanh(W_i z_{i-1} + b_i) for hidden layers, affine output layer,
/// plus the bypass term when configured.
inline Vector mlp_forward(const Mlp& net, const Vector& z0) {
  if (z0.size() != net.input_dim())
    throw DimensionError("mlp_forward: input dim " + std::to_string(z0.size()) +
                         ", expected " + std::to_string(net.input_dim()));
  Vector z = z0;
  const int last = net.num_layers() - 1;
  for (int i = 0; i < last; ++i)
    z = (net.weights[i] * z + net.biases[i]).array().tanh().matrix();
  Vector out = net.weights[last] * z + net.biases[last];
  if (net.bypass) out += *net.bypass * z0;
  return out;
}

/// Tape-side handles for one Mlp's parameter leaves.
struct MlpLeaves {
  std::vector<int> weights;
  std::vector<int> biases;
  int bypass = -1;
};

/// Registers the network parameters as gradient-carrying leaves.
inline MlpLeaves mlp_leaves(Tape& tape, const Mlp& net) {
  MlpLeaves l;
  for (const auto& w : net.weights) l.weights.push_back(tape.leaf(w));
  for (const auto& b : net.biases) l.biases.push_back(tape.leaf(b));
  if (net.bypass) l.bypass = tape.leaf(*net.bypass);
  return l;
}

/// Batched tape forward: `z0` holds one input per column (d_in x n_cols).
/// `ones_row` must be a constant 1 x n_cols row of ones used to broadcast
/// biases across the batch.
inline int mlp_forward_graph(Tape& tape, const MlpLeaves& leaves, int z0,
                             int ones_row) {
  const int last = static_cast<int>(leaves.weights.size()) - 1;
  int z = z0;
  for (int i = 0; i < last; ++i) {
    int a = tape.add(tape.matmul(leaves.weights[i], z),
                     tape.matmul(leaves.biases[i], ones_row));
    z = tape.tanh(a);
  }
  int out = tape.add(tape.matmul(leaves.weights[last], z),
                     tape.matmul(leaves.biases[last], ones_row));
  if (leaves.bypass >= 0)
    out = tape.add(out, tape.matmul(leaves.bypass, z0));
  return out;
}

}  // namespace lpvid

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "lpvid/encoder.hpp"
#include "lpvid/lpv_model.hpp"

namespace lpvid {

/// Which parameter family an entry belongs to: the state-space matrices
/// (theta), the scheduling map (eta) or the encoder (xi).
enum class ParamGroup { theta, eta, xi };

/// Flat, fixed-order view over every trainable matrix. The order defines the
/// layout of gradient vectors, Adam moments and checkpoints.
struct ParamRegistry {
  struct Entry {
    std::string name;
    ParamGroup group;
    Matrix* value;
  };
  std::vector<Entry> entries;

  size_t count() const { return entries.size(); }

  Eigen::Index total_size() const {
    Eigen::Index n = 0;
    for (const auto& e : entries) n += e.value->size();
    return n;
  }

  Vector flatten() const {
    Vector v(total_size());
    Eigen::Index k = 0;
    for (const auto& e : entries) {
      for (Eigen::Index c = 0; c < e.value->cols(); ++c)
        for (Eigen::Index r = 0; r < e.value->rows(); ++r)
          v(k++) = (*e.value)(r, c);
    }
    return v;
  }

  void unflatten(const Vector& v) {
    Eigen::Index k = 0;
    for (const auto& e : entries) {
      for (Eigen::Index c = 0; c < e.value->cols(); ++c)
        for (Eigen::Index r = 0; r < e.value->rows(); ++r)
          (*e.value)(r, c) = v(k++);
    }
  }
};

namespace detail {

inline void add_affine(ParamRegistry& reg, AffineMatrixFunction& f,
                       const std::string& name) {
  reg.entries.push_back({name + "0", ParamGroup::theta, &f.base});
  for (size_t i = 0; i < f.coeffs.size(); ++i)
    reg.entries.push_back(
        {name + std::to_string(i + 1), ParamGroup::theta, &f.coeffs[i]});
}

inline void add_mlp(ParamRegistry& reg, Mlp& net, ParamGroup group,
                    const std::string& prefix) {
  for (size_t i = 0; i < net.weights.size(); ++i) {
    reg.entries.push_back(
        {prefix + ".W" + std::to_string(i), group, &net.weights[i]});
    reg.entries.push_back(
        {prefix + ".b" + std::to_string(i), group, &net.biases[i]});
  }
  if (net.bypass)
    reg.entries.push_back({prefix + ".bypass", group, &*net.bypass});
}

}  // namespace detail

/// Collects theta, eta, xi in a fixed order. Under output_error the K
/// matrices are excluded so they stay identically zero; `sched` may be null
/// (oracle-scheduled training has no eta).
inline ParamRegistry collect_parameters(LpvSsModel& model, SchedulingNet* sched,
                                        EncoderNet* enc) {
  ParamRegistry reg;
  detail::add_affine(reg, model.A, "A");
  detail::add_affine(reg, model.B, "B");
  detail::add_affine(reg, model.C, "C");
  detail::add_affine(reg, model.D, "D");
  if (model.noise == NoiseStructure::innovation)
    detail::add_affine(reg, model.K, "K");
  if (sched) {
    if (sched->phi_x) detail::add_mlp(reg, *sched->phi_x, ParamGroup::eta, "phi_x");
    if (sched->phi_y) detail::add_mlp(reg, *sched->phi_y, ParamGroup::eta, "phi_y");
  }
  if (enc) detail::add_mlp(reg, enc->net, ParamGroup::xi, "psi");
  return reg;
}

}  // namespace lpvid

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "lpvid/errors.hpp"
#include "lpvid/lpv_model.hpp"

namespace lpvid {

/// Aligned input/output record, one row per sample, with optional oracle
/// scheduling columns. Normalization statistics are computed on the
/// estimation split only and copied to the other splits.
struct DataSet {
  Matrix u;  // N x n_u
  Matrix y;  // N x n_y
  Matrix p;  // N x n_p, empty unless the generator provides an oracle map
  double sample_time = 0.0;
  uint64_t seed = 0;
  std::string role;  // "estimation", "validation", "test", ...
  Normalization stats;
  bool has_stats = false;

  int n() const { return static_cast<int>(u.rows()); }
  int n_u() const { return static_cast<int>(u.cols()); }
  int n_y() const { return static_cast<int>(y.cols()); }
  int n_p() const { return static_cast<int>(p.cols()); }
  bool has_oracle_p() const { return p.size() > 0; }
};

/// Per-channel mean and sample standard deviation (1/(N-1)). Channels with
/// (numerically) zero spread get unit scale so the transform stays invertible.
inline Normalization compute_normalization(const DataSet& ds) {
  if (ds.n() < 2) throw DimensionError("compute_normalization: need >= 2 samples");
  auto stats_of = [&](const Matrix& m) {
    ChannelStats s;
    s.mean = m.colwise().mean();
    const Matrix centered = m.rowwise() - s.mean.transpose();
    s.stdev = (centered.colwise().squaredNorm() / double(m.rows() - 1))
                  .cwiseSqrt()
                  .transpose();
    for (Eigen::Index i = 0; i < s.stdev.size(); ++i)
      if (s.stdev(i) < 1e-12) s.stdev(i) = 1.0;
    return s;
  };
  return Normalization{stats_of(ds.u), stats_of(ds.y)};
}

}  // namespace lpvid

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>

#include "lpvid/errors.hpp"
#include "lpvid/lpv_model.hpp"

namespace lpvid {

/// Best fit rate in percent, mean-of-norms form:
/// max{1 - sum||y_t - ŷ_t|| / sum||y_t - ȳ||, 0} * 100 with ȳ the sample
/// mean of y. Rows are samples.
inline double bfr(const Matrix& y, const Matrix& y_hat) {
  if (y.rows() != y_hat.rows() || y.cols() != y_hat.cols())
    throw DimensionError("bfr: sequence shapes differ");
  if (y.rows() < 2) throw DimensionError("bfr: need at least 2 samples");
  const Eigen::RowVectorXd mean = y.colwise().mean();
  double num = 0.0, den = 0.0;
  for (Eigen::Index t = 0; t < y.rows(); ++t) {
    num += (y.row(t) - y_hat.row(t)).norm();
    den += (y.row(t) - mean).norm();
  }
  if (den <= 0.0) throw DimensionError("bfr: y is constant");
  return std::max(1.0 - num / den, 0.0) * 100.0;
}

/// Expected BFR of the exact noiseless predictor under additive output noise
/// at the given amplitude-ratio SNR: (1 - 10^(-snr_db/20)) * 100.
inline double noise_ceiling_bfr(double snr_db) {
  return (1.0 - std::pow(10.0, -snr_db / 20.0)) * 100.0;
}

/// Root mean of squared row norms.
inline double rms(const Matrix& seq) {
  if (seq.rows() == 0) throw DimensionError("rms: empty sequence");
  return std::sqrt(seq.rowwise().squaredNorm().mean());
}

/// Fit summary for one evaluation run.
struct FitReport {
  double bfr_percent = 0.0;
  double rms_error = 0.0;
  double noise_ceiling_percent = 100.0;
  long n_samples = 0;
};

}  // namespace lpvid

// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include "lpvid/metrics.hpp"
#include "support/oracles.hpp"

using lpvid::Matrix;

TEST_CASE("bfr: exact fit, mean predictor, clipping, errors") {
  lpvid::Rng rng(1);
  const Matrix y = oracles::random_matrix(rng, 50, 2);

  REQUIRE(lpvid::bfr(y, y) == 100.0);

  Matrix mean_pred(50, 2);
  const Eigen::RowVectorXd mu = y.colwise().mean();
  for (int k = 0; k < 50; ++k) mean_pred.row(k) = mu;
  REQUIRE(lpvid::bfr(y, mean_pred) == 0.0);

  const Matrix worse = mean_pred + 3.0 * oracles::random_matrix(rng, 50, 2);
  REQUIRE(lpvid::bfr(y, worse) == 0.0);  // clipped at zero

  REQUIRE_THROWS_AS(lpvid::bfr(y, Matrix::Zero(10, 2)), lpvid::DimensionError);
  REQUIRE_THROWS_AS(lpvid::bfr(Matrix::Ones(20, 1), Matrix::Zero(20, 1)),
                    lpvid::DimensionError);  // constant y
}

TEST_CASE("bfr is invariant to a shared affine rescaling") {
  lpvid::Rng rng(2);
  const Matrix y = oracles::random_matrix(rng, 40, 1);
  const Matrix yh = y + 0.1 * oracles::random_matrix(rng, 40, 1);
  const double base = lpvid::bfr(y, yh);
  const double alpha = 3.7, c = -2.0;
  const double scaled = lpvid::bfr((alpha * y).array() + c,
                                   (alpha * yh).array() + c);
  REQUIRE(scaled == Catch::Approx(base).epsilon(1e-10));
}

TEST_CASE("noise ceiling reproduces the 35 dB value and is monotone") {
  const double nc35 = lpvid::noise_ceiling_bfr(35.0);
  REQUIRE(std::round(nc35 * 100.0) / 100.0 == 98.22);
  REQUIRE(lpvid::noise_ceiling_bfr(1e9) == Catch::Approx(100.0));
  REQUIRE(lpvid::noise_ceiling_bfr(0.0) == 0.0);
  double prev = -1e9;
  for (double snr : {0.0, 10.0, 20.0, 35.0, 60.0}) {
    const double v = lpvid::noise_ceiling_bfr(snr);
    REQUIRE(v > prev);
    prev = v;
  }
}

TEST_CASE("rms of sequences") {
  REQUIRE(lpvid::rms(Matrix::Zero(5, 2)) == 0.0);
  Matrix one(1, 1);
  one << 3.0;
  REQUIRE(lpvid::rms(one) == 3.0);
  Matrix two(2, 1);
  two << 3.0, 4.0;
  REQUIRE(lpvid::rms(two) == Catch::Approx(std::sqrt(12.5)));
  REQUIRE_THROWS_AS(lpvid::rms(Matrix(0, 1)), lpvid::DimensionError);
}

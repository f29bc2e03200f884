// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include "lpvid/encoder.hpp"
#include "support/oracles.hpp"

using lpvid::EncoderNet;
using lpvid::LagWindow;
using lpvid::Matrix;
using lpvid::Vector;

TEST_CASE("encode is a pure function with the documented flattening order") {
  EncoderNet enc = lpvid::make_encoder(2, 1, 1, 3, {8}, 1);
  lpvid::Rng rng(2);
  const LagWindow w{oracles::random_matrix(rng, 4, 1),
                    oracles::random_matrix(rng, 4, 1)};
  const Vector a = lpvid::encode(enc, w);
  const Vector b = lpvid::encode(enc, w);
  REQUIRE(a == b);

  // Flattening: u samples oldest-first, then y samples.
  const Vector z = lpvid::flatten_window(w);
  for (int i = 0; i < 4; ++i) {
    REQUIRE(z(i) == w.u(i, 0));
    REQUIRE(z(4 + i) == w.y(i, 0));
  }

  // Permuting the window changes the output for generic weights.
  LagWindow wp = w;
  std::swap(wp.u(0, 0), wp.u(3, 0));
  REQUIRE(lpvid::encode(enc, wp) != a);
}

TEST_CASE("zeroed output layer returns the output bias for any window") {
  EncoderNet enc = lpvid::make_encoder(2, 1, 1, 2, {4}, 3);
  for (auto& w : enc.net.weights) w.setZero();
  enc.net.bypass->setZero();
  enc.net.biases.back() << 1.25, -0.5;
  lpvid::Rng rng(4);
  const LagWindow w{oracles::random_matrix(rng, 3, 1),
                    oracles::random_matrix(rng, 3, 1)};
  const Vector x = lpvid::encode(enc, w);
  REQUIRE(x(0) == 1.25);
  REQUIRE(x(1) == -0.5);
}

TEST_CASE("incomplete windows are rejected") {
  EncoderNet enc = lpvid::make_encoder(2, 1, 1, 3, {4}, 5);
  lpvid::Rng rng(6);
  const LagWindow w{oracles::random_matrix(rng, 3, 1),
                    oracles::random_matrix(rng, 3, 1)};
  REQUIRE_THROWS_AS(lpvid::encode(enc, w), lpvid::DimensionError);
}

TEST_CASE("closed-form reconstructability weights recover the true state") {
  // Observable LTI system; K places the observer poles at zero, so
  // Atil = A - K C is nilpotent and the reconstruction is exact.
  Matrix A(2, 2), B(2, 1), C(1, 2), D(1, 1), K(2, 1);
  A << 0.5, 0.1, 0.0, 0.3;
  B << 1.0, -0.4;
  C << 1.0, 0.0;
  D << 0.25;
  K << 0.8, 0.9;
  const Matrix Atil = A - K * C;
  REQUIRE((Atil * Atil).norm() < 1e-14);  // deadbeat

  const int lag = 4;
  EncoderNet enc;
  enc.lag = lag;
  enc.net = lpvid::mlp_init({(lag + 1) * 2, 2}, false, 0);
  Matrix& W = enc.net.weights[0];
  W.setZero();
  {
    const Matrix Btil = B - K * D;
    Matrix pow = Matrix::Identity(2, 2);
    for (int j = lag - 1; j >= 0; --j) {
      W.middleCols(j, 1) += pow * Btil;
      W.middleCols(lag + 1 + j, 1) += pow * K;
      pow = Atil * pow;
    }
  }

  lpvid::Rng rng(7);
  const int N = 40;
  const Matrix u = oracles::random_matrix(rng, N, 1);
  Matrix y(N, 1);
  Matrix x_traj(N + 1, 2);
  Vector x = oracles::random_matrix(rng, 2, 1);  // unknown initial state
  x_traj.row(0) = x.transpose();
  for (int k = 0; k < N; ++k) {
    y(k, 0) = (C * x + D * u.row(k).transpose())(0);
    x = A * x + B * u.row(k).transpose();
    x_traj.row(k + 1) = x.transpose();
  }

  for (int t = lag; t < N; ++t) {
    const LagWindow w{u.middleRows(t - lag, lag + 1),
                      y.middleRows(t - lag, lag + 1)};
    const Vector xhat = lpvid::encode(enc, w);
    REQUIRE((xhat - x_traj.row(t).transpose()).cwiseAbs().maxCoeff() < 1e-8);
  }
}

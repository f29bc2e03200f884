// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include "lpvid/lpv_model.hpp"
#include "support/oracles.hpp"

using lpvid::AffineMatrixFunction;
using lpvid::DataWindow;
using lpvid::EncoderNet;
using lpvid::LpvSsModel;
using lpvid::Matrix;
using lpvid::NoiseStructure;
using lpvid::SchedulingMode;
using lpvid::SchedulingNet;
using lpvid::Vector;

namespace {

Matrix m1x1(double v) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return m;
}

// Linear deadbeat encoder: with Atil = A - K C nilpotent (Atil^n = 0) and
// Btil = B - K D, the predictor-form identity gives the true state as an
// exact linear function of the lag window:
//   x_t = sum_j Atil^{n-1-j} (Btil u_{t-n+j} + K y_{t-n+j}).
EncoderNet deadbeat_encoder(const Matrix& A, const Matrix& B, const Matrix& C,
                            const Matrix& D, const Matrix& K, int lag) {
  const int n_x = static_cast<int>(A.rows());
  const int n_u = static_cast<int>(B.cols());
  const int n_y = static_cast<int>(C.rows());
  const Matrix Atil = A - K * C;
  const Matrix Btil = B - K * D;

  EncoderNet enc;
  enc.lag = lag;
  enc.net = lpvid::mlp_init({(lag + 1) * (n_u + n_y), n_x}, false, 0);
  Matrix& W = enc.net.weights[0];
  W.setZero();

  Matrix pow = Matrix::Identity(n_x, n_x);  // Atil^{n-1-j} built backwards
  for (int j = lag - 1; j >= 0; --j) {
    W.middleCols(j * n_u, n_u) += pow * Btil;
    W.middleCols((lag + 1) * n_u + j * n_y, n_y) += pow * K;
    pow = Atil * pow;
  }
  return enc;
}

}  // namespace

TEST_CASE("affine_eval basics and affinity") {
  AffineMatrixFunction f;
  f.base = m1x1(1.0);
  f.coeffs = {m1x1(2.0)};
  Vector p(1);
  p << 3.0;
  REQUIRE(lpvid::affine_eval(f, p)(0, 0) == 7.0);
  REQUIRE(lpvid::affine_eval(f, Vector::Zero(1))(0, 0) == 1.0);
  REQUIRE_THROWS_AS(lpvid::affine_eval(f, Vector::Zero(2)),
                    lpvid::DimensionError);

  lpvid::Rng rng(3);
  AffineMatrixFunction g;
  g.base = oracles::random_matrix(rng, 3, 2);
  g.coeffs = {oracles::random_matrix(rng, 3, 2), oracles::random_matrix(rng, 3, 2)};
  for (int trial = 0; trial < 20; ++trial) {
    const double alpha = rng.uniform();
    const Vector p1 = oracles::random_matrix(rng, 2, 1);
    const Vector p2 = oracles::random_matrix(rng, 2, 1);
    const Matrix lhs = lpvid::affine_eval(g, alpha * p1 + (1 - alpha) * p2);
    const Matrix rhs = alpha * lpvid::affine_eval(g, p1) +
                       (1 - alpha) * lpvid::affine_eval(g, p2);
    REQUIRE((lhs - rhs).norm() <= 1e-12 * std::max(1.0, rhs.norm()));
  }
}

TEST_CASE("scheduling_eval respects the partition contract") {
  LpvSsModel m = lpvid::init_lpv_model(2, 1, 1, 2, 1, NoiseStructure::innovation, 1);
  SchedulingNet s = lpvid::make_scheduling_net(m, {8}, 2);
  lpvid::Rng rng(5);
  const Vector x = oracles::random_matrix(rng, 2, 1);
  const Vector u = oracles::random_matrix(rng, 1, 1);
  const Vector y = oracles::random_matrix(rng, 1, 1);

  SECTION("composition matches the two independent networks") {
    const Vector p = lpvid::scheduling_eval(s, x, u, &y);
    const Vector px = lpvid::mlp_forward(*s.phi_x, lpvid::concat_xuy(x, u, y));
    const Vector py = lpvid::mlp_forward(*s.phi_y, lpvid::concat_xu(x, u));
    REQUIRE((p.head(2) - px).norm() == 0.0);
    REQUIRE((p.tail(1) - py).norm() == 0.0);
  }
  SECTION("innovation mode requires y") {
    REQUIRE_THROWS_AS(lpvid::scheduling_eval(s, x, u, nullptr),
                      lpvid::DimensionError);
  }
  SECTION("output_error mode rejects y") {
    LpvSsModel moe = lpvid::init_lpv_model(2, 1, 1, 2, 1, NoiseStructure::output_error, 1);
    SchedulingNet soe = lpvid::make_scheduling_net(moe, {8}, 2);
    REQUIRE_THROWS_AS(lpvid::scheduling_eval(soe, x, u, &y),
                      lpvid::DimensionError);
    REQUIRE_NOTHROW(lpvid::scheduling_eval(soe, x, u, nullptr));
  }
  SECTION("zeroed output layers return the output biases") {
    s.phi_x->weights.back().setZero();
    s.phi_x->bypass->setZero();
    s.phi_x->biases.back() << 0.4, -0.2;
    s.phi_y->weights.back().setZero();
    s.phi_y->bypass->setZero();
    s.phi_y->biases.back() << 1.5;
    const Vector p = lpvid::scheduling_eval(s, x, u, &y);
    REQUIRE(p(0) == 0.4);
    REQUIRE(p(1) == -0.2);
    REQUIRE(p(2) == 1.5);
  }
  SECTION("empty y-partition gives p = p_x only") {
    LpvSsModel m2 = lpvid::init_lpv_model(2, 1, 1, 1, 0, NoiseStructure::output_error, 3);
    SchedulingNet s2 = lpvid::make_scheduling_net(m2, {8}, 4);
    REQUIRE_FALSE(s2.phi_y.has_value());
    const Vector p = lpvid::scheduling_eval(s2, x, u, nullptr);
    REQUIRE(p.size() == 1);
  }
}

TEST_CASE("predictor_step zero model and LTI hand check") {
  SECTION("all-theta-zero gives yhat=0, e=y, x_next=0") {
    LpvSsModel m = lpvid::init_lpv_model(2, 1, 1, 1, 0, NoiseStructure::innovation, 1);
    m.A.base.setZero();
    m.B.base.setZero();
    m.C.base.setZero();
    m.A.coeffs[0].setZero();
    m.B.coeffs[0].setZero();
    m.K.coeffs[0].setZero();
    SchedulingNet s = lpvid::make_scheduling_net(m, {8}, 2);
    Vector x(2), u(1), y(1);
    x << 1.0, -2.0;
    u << 0.5;
    y << 3.0;
    const auto r = lpvid::predictor_step(m, s, x, u, y);
    REQUIRE(r.y_pred.norm() == 0.0);
    REQUIRE(r.innovation(0) == 3.0);
    REQUIRE(r.x_next.norm() == 0.0);
  }
  SECTION("scalar LTI recursion") {
    const LpvSsModel m = oracles::lti_model(m1x1(0.5), m1x1(1.0), m1x1(1.0),
                                            m1x1(0.0), m1x1(0.0),
                                            NoiseStructure::output_error);
    SchedulingNet s;  // no partitions
    Vector x(1), u(1), y(1);
    x << 2.0;
    u << 1.0;
    y << 5.0;
    const auto r = lpvid::predictor_step(m, s, x, u, y);
    REQUIRE(r.y_pred(0) == 2.0);
    REQUIRE(r.x_next(0) == 2.0);
    REQUIRE(r.innovation(0) == 3.0);
  }
  SECTION("output_error state update ignores y") {
    LpvSsModel m = lpvid::init_lpv_model(2, 1, 1, 1, 1, NoiseStructure::output_error, 7);
    m.A.coeffs[0].setRandom();
    m.D.coeffs[0].setRandom();
    SchedulingNet s = lpvid::make_scheduling_net(m, {8}, 8);
    lpvid::Rng rng(9);
    const Vector x = oracles::random_matrix(rng, 2, 1);
    const Vector u = oracles::random_matrix(rng, 1, 1);
    Vector y1(1), y2(1);
    y1 << 0.3;
    y2 << 42.0;
    const auto r1 = lpvid::predictor_step(m, s, x, u, y1);
    const auto r2 = lpvid::predictor_step(m, s, x, u, y2);
    REQUIRE(r1.x_next == r2.x_next);
    REQUIRE(r1.y_pred == r2.y_pred);
    REQUIRE(r1.innovation(0) != r2.innovation(0));
  }
}

TEST_CASE("partition firewall: same-step y never reaches p_y or yhat") {
  LpvSsModel m = lpvid::init_lpv_model(2, 1, 1, 1, 1, NoiseStructure::innovation, 11);
  m.C.coeffs[0].setRandom();
  m.K.base.setRandom();
  SchedulingNet s = lpvid::make_scheduling_net(m, {8, 8}, 12);
  lpvid::Rng rng(13);
  const Vector x = oracles::random_matrix(rng, 2, 1);
  const Vector u = oracles::random_matrix(rng, 1, 1);
  Vector y1(1), y2(1);
  y1 << 0.7;
  y2 << -2.5;
  const auto r1 = lpvid::predictor_step(m, s, x, u, y1);
  const auto r2 = lpvid::predictor_step(m, s, x, u, y2);
  REQUIRE(r1.p.tail(1) == r2.p.tail(1));   // p_y unchanged
  REQUIRE(r1.y_pred == r2.y_pred);         // yhat unchanged
  REQUIRE(r1.p.head(1) != r2.p.head(1));   // p_x does see y (innovation)
  REQUIRE(r1.x_next != r2.x_next);         // K e feeds the state
}

TEST_CASE("LTI reduction matches the closed-form predictor over 100 steps") {
  lpvid::Rng rng(17);
  for (int inst = 0; inst < 5; ++inst) {
    Matrix A = oracles::random_matrix(rng, 2, 2);
    const double rho =
        Eigen::EigenSolver<Matrix>(A).eigenvalues().cwiseAbs().maxCoeff();
    A *= 0.8 / rho;
    const Matrix B = oracles::random_matrix(rng, 2, 1);
    const Matrix C = oracles::random_matrix(rng, 1, 2);
    const Matrix D = oracles::random_matrix(rng, 1, 1);
    Matrix K;
    do {  // keep the predictor dynamics A - K C stable
      K = 0.3 * oracles::random_matrix(rng, 2, 1);
    } while (Eigen::EigenSolver<Matrix>(Matrix(A - K * C))
                 .eigenvalues()
                 .cwiseAbs()
                 .maxCoeff() > 0.9);

    const LpvSsModel m =
        oracles::lti_model(A, B, C, D, K, NoiseStructure::innovation);
    const int T = 100;
    const Matrix u = oracles::random_matrix(rng, T, 1);
    const Matrix y = oracles::random_matrix(rng, T, 1);

    DataWindow w;
    w.lag = 0;
    w.u = u;
    w.y = y;
    w.p = Matrix::Zero(T, 0);
    const auto r = lpvid::rollout(m, nullptr, nullptr, SchedulingMode::oracle, w, T);
    const Matrix ref =
        oracles::lti_predictor(A, B, C, D, K, Vector::Zero(2), u, y);
    REQUIRE((r.y_pred - ref).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("rollout with T=1 equals one predictor step") {
  LpvSsModel m = lpvid::init_lpv_model(2, 1, 1, 1, 1, NoiseStructure::innovation, 19);
  m.A.coeffs[0].setRandom();
  m.K.base.setRandom();
  SchedulingNet s = lpvid::make_scheduling_net(m, {8}, 20);
  EncoderNet enc = lpvid::make_encoder(2, 1, 1, 2, {8}, 21);
  lpvid::Rng rng(22);
  const Matrix u = oracles::random_matrix(rng, 3, 1);
  const Matrix y = oracles::random_matrix(rng, 3, 1);

  DataWindow w;
  w.lag = 2;
  w.u = u;
  w.y = y;
  const auto r = lpvid::rollout(m, &s, &enc, SchedulingMode::self_scheduled, w, 1);

  const Vector x0 =
      lpvid::encode(enc, lpvid::LagWindow{u.topRows(3), y.topRows(3)});
  const auto step = lpvid::predictor_step(m, s, x0, u.row(2).transpose(),
                                          y.row(2).transpose());
  REQUIRE((r.y_pred.row(0).transpose() - step.y_pred).norm() == 0.0);
  REQUIRE((r.x_traj.row(1).transpose() - step.x_next).norm() == 0.0);
}

TEST_CASE("self-scheduled and external rollouts agree for an exact encoder") {
  // LTI core with nilpotent A (A^2 = 0), scheduling only in D through phi_y.
  Matrix A(2, 2), B(2, 1), C(1, 2), D(1, 1), K(2, 1);
  A << 0.0, 0.0, 0.7, 0.0;
  B << 1.0, 0.5;
  C << 0.0, 1.0;
  D << 0.2;
  K.setZero();

  LpvSsModel m = oracles::lti_model(A, B, C, D, K, NoiseStructure::output_error);
  m.n_p_y = 1;
  m.C.coeffs = {Matrix::Zero(1, 2)};
  m.D.coeffs = {m1x1(0.3)};

  SchedulingNet s = lpvid::make_scheduling_net(m, {8}, 30);  // phi_y only
  REQUIRE_FALSE(s.phi_x.has_value());

  const int lag = 3, T = 12;
  EncoderNet enc = deadbeat_encoder(A, B, C, D, K, lag);

  // Data from the same LTI state recursion; y is irrelevant to the identity
  // (the deadbeat weights are zero on the y block since K = 0).
  lpvid::Rng rng(31);
  const int N = lag + T;
  Matrix u = oracles::random_matrix(rng, N, 1);
  Matrix y(N, 1);
  Vector x = Vector::Zero(2);
  for (int k = 0; k < N; ++k) {
    y(k, 0) = (C * x + D * u.row(k).transpose())(0);
    x = A * x + B * u.row(k).transpose();
  }

  DataWindow w;
  w.lag = lag;
  w.u = u;
  w.y = y;
  const auto self =
      lpvid::rollout(m, &s, &enc, SchedulingMode::self_scheduled, w, T);
  const auto ext = lpvid::rollout(m, &s, &enc, SchedulingMode::external, w, T);
  REQUIRE((self.y_pred - ext.y_pred).cwiseAbs().maxCoeff() < 1e-10);
  REQUIRE((self.p_traj - ext.p_traj).cwiseAbs().maxCoeff() < 1e-10);

  // Non-vacuity: a perturbed encoder breaks the agreement.
  EncoderNet enc2 = enc;
  enc2.net.weights[0] *= 1.1;
  const auto self2 =
      lpvid::rollout(m, &s, &enc2, SchedulingMode::self_scheduled, w, T);
  const auto ext2 = lpvid::rollout(m, &s, &enc2, SchedulingMode::external, w, T);
  REQUIRE((self2.y_pred - ext2.y_pred).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("output_error rollouts ignore y beyond the encoder window") {
  LpvSsModel m = lpvid::init_lpv_model(2, 1, 1, 1, 1, NoiseStructure::output_error, 40);
  m.A.coeffs[0] << 0.05, 0.0, 0.0, 0.05;
  m.D.coeffs[0] << 0.4;
  SchedulingNet s = lpvid::make_scheduling_net(m, {8, 8}, 41);
  EncoderNet enc = lpvid::make_encoder(2, 1, 1, 2, {8}, 42);

  lpvid::Rng rng(43);
  const int T = 10, lag = 2, N = lag + T;
  const Matrix u = oracles::random_matrix(rng, N, 1);
  Matrix y1 = oracles::random_matrix(rng, N, 1);
  Matrix y2 = y1;
  for (int k = lag + 1; k < N; ++k) y2(k, 0) += rng.uniform(0.5, 1.5);

  DataWindow w1{u, y1, Matrix(), lag};
  DataWindow w2{u, y2, Matrix(), lag};
  const auto r1 = lpvid::rollout(m, &s, &enc, SchedulingMode::self_scheduled, w1, T);
  const auto r2 = lpvid::rollout(m, &s, &enc, SchedulingMode::self_scheduled, w2, T);
  REQUIRE(r1.y_pred == r2.y_pred);
}

TEST_CASE("rollout rejects short windows and reports divergence steps") {
  LpvSsModel m = lpvid::init_lpv_model(2, 1, 1, 0, 0, NoiseStructure::output_error, 50);
  SchedulingNet s = lpvid::make_scheduling_net(m, {8}, 51);
  EncoderNet enc = lpvid::make_encoder(2, 1, 1, 2, {8}, 52);
  lpvid::Rng rng(53);

  DataWindow w;
  w.lag = 2;
  w.u = oracles::random_matrix(rng, 6, 1);
  w.y = oracles::random_matrix(rng, 6, 1);
  REQUIRE_THROWS_AS(
      lpvid::rollout(m, &s, &enc, SchedulingMode::self_scheduled, w, 10),
      lpvid::DimensionError);

  m.A.base = 10.0 * Matrix::Identity(2, 2);
  DataWindow w2;
  w2.lag = 2;
  w2.u = oracles::random_matrix(rng, 42, 1);
  w2.y = oracles::random_matrix(rng, 42, 1);
  try {
    lpvid::rollout(m, &s, &enc, SchedulingMode::self_scheduled, w2, 40);
    FAIL("expected divergence");
  } catch (const lpvid::DivergenceError& e) {
    REQUIRE(e.step_index >= 0);
    REQUIRE(e.step_index < 40);
  }
}

TEST_CASE("simulate: zero model stays at zero, impulse matches closed form") {
  SECTION("all-zero configuration") {
    LpvSsModel m = lpvid::init_lpv_model(2, 1, 1, 1, 1, NoiseStructure::output_error, 60);
    m.A.base.setZero();
    m.B.base.setZero();
    m.C.base.setZero();
    SchedulingNet s = lpvid::make_scheduling_net(m, {8}, 61);
    const auto r = lpvid::simulate(m, &s, nullptr, SchedulingMode::self_scheduled,
                                   Matrix::Zero(5, 1), Vector::Zero(2));
    REQUIRE(r.y_sim.norm() == 0.0);
  }
  SECTION("LTI impulse response") {
    lpvid::Rng rng(62);
    Matrix A = oracles::random_matrix(rng, 2, 2);
    A *= 0.7 / Eigen::EigenSolver<Matrix>(A).eigenvalues().cwiseAbs().maxCoeff();
    const Matrix B = oracles::random_matrix(rng, 2, 1);
    const Matrix C = oracles::random_matrix(rng, 1, 2);
    const Matrix D = oracles::random_matrix(rng, 1, 1);
    const LpvSsModel m = oracles::lti_model(A, B, C, D, Matrix::Zero(2, 1),
                                            NoiseStructure::output_error);
    Matrix u = Matrix::Zero(10, 1);
    u(0, 0) = 1.0;
    const auto r = lpvid::simulate(m, nullptr, nullptr,
                                   SchedulingMode::self_scheduled, u,
                                   Vector::Zero(2));
    REQUIRE(std::abs(r.y_sim(0, 0) - D(0, 0)) < 1e-12);
    for (int k = 1; k < 10; ++k) {
      Matrix Apow = Matrix::Identity(2, 2);
      for (int i = 0; i < k - 1; ++i) Apow = A * Apow;
      REQUIRE(std::abs(r.y_sim(k, 0) - (C * Apow * B)(0, 0)) < 1e-10);
    }
  }
  SECTION("output_error simulate equals rollout on its own outputs") {
    LpvSsModel m = lpvid::init_lpv_model(2, 1, 1, 1, 1, NoiseStructure::output_error, 63);
    m.A.coeffs[0] << 0.05, 0.01, 0.0, 0.02;
    m.D.coeffs[0] << 0.3;
    SchedulingNet s = lpvid::make_scheduling_net(m, {8}, 64);
    lpvid::Rng rng(65);
    const int lag = 2, T = 15, N = lag + T;
    const Matrix u = oracles::random_matrix(rng, N, 1);

    Vector x0 = oracles::random_matrix(rng, 2, 1);
    const auto sim = lpvid::simulate(m, &s, nullptr,
                                     SchedulingMode::self_scheduled, u, x0);

    // Encoder that returns the simulated state at the anchor regardless of
    // the window contents.
    EncoderNet enc = lpvid::make_encoder(2, 1, 1, lag, {4}, 66);
    for (auto& wm : enc.net.weights) wm.setZero();
    enc.net.bypass->setZero();
    enc.net.biases.back() = sim.x_traj.row(lag).transpose();

    DataWindow w;
    w.lag = lag;
    w.u = u;
    w.y = sim.y_sim;  // feed the model its own noiseless outputs
    const auto roll =
        lpvid::rollout(m, &s, &enc, SchedulingMode::self_scheduled, w, T);
    REQUIRE((roll.y_pred - sim.y_sim.bottomRows(T)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("output_error models with nonzero K are rejected") {
  LpvSsModel m = lpvid::init_lpv_model(2, 1, 1, 0, 0, NoiseStructure::output_error, 70);
  REQUIRE_NOTHROW(lpvid::validate_model(m));
  m.K.base(0, 0) = 0.1;
  REQUIRE_THROWS_AS(lpvid::validate_model(m), lpvid::DimensionError);
}

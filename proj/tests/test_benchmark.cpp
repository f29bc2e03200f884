// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "lpvid/benchmark.hpp"
#include "lpvid/dataset_io.hpp"
#include "support/oracles.hpp"

using lpvid::DataSet;
using lpvid::ExcitationConfig;
using lpvid::Matrix;
using lpvid::NoiseSpec;
using lpvid::NoiseStructure;
using lpvid::SplitSpec;
using lpvid::Vector;

TEST_CASE("excitation: carrier structure and noise variance") {
  SECTION("noiseless carrier starts at zero and follows one sine") {
    ExcitationConfig cfg;
    cfg.amplitude = 0.5;
    cfg.noise_std = 0.0;
    cfg.sample_time = 0.1;
    cfg.length = 200;
    lpvid::Rng rng(1);
    const Matrix u = lpvid::generate_excitation(cfg, rng);
    REQUIRE(u(0, 0) == 0.0);  // sin(0)
    // Recover omega from the first sample and check global consistency.
    const double omega = std::asin(u(1, 0) / cfg.amplitude) / cfg.sample_time;
    REQUIRE(omega >= 2.0 * M_PI * cfg.band_lo);
    REQUIRE(omega <= 2.0 * M_PI * cfg.band_hi);
    for (int k = 0; k < 200; ++k)
      REQUIRE(u(k, 0) ==
              Catch::Approx(0.5 * std::sin(omega * 0.1 * k)).margin(1e-9));
  }
  SECTION("sample variance of the noise part within 2%") {
    ExcitationConfig cfg;
    cfg.amplitude = 0.0;  // isolate v_k
    cfg.noise_std = 1.0 / 3.0;
    cfg.length = 100000;
    lpvid::Rng rng(2);
    const Matrix u = lpvid::generate_excitation(cfg, rng);
    const double mean = u.col(0).mean();
    const double var =
        (u.col(0).array() - mean).square().sum() / (cfg.length - 1);
    REQUIRE(var == Catch::Approx(1.0 / 9.0).epsilon(0.02));
  }
}

TEST_CASE("pendulum dynamics: hand step, equilibrium and oracle identity") {
  const auto sys = lpvid::builtin_pendulum();  // w0sq=9, d=0.5, c=5, Ts=0.1
  SECTION("hand-evaluated recursion step") {
    Vector x(2), u(1);
    x << 0.0, 0.0;
    u << 1.0;
    const Vector xn = sys.f(x, u, Vector::Zero(1));
    REQUIRE(xn(0) == 0.0);
    REQUIRE(xn(1) == Catch::Approx(0.5));
  }
  SECTION("zero input from the origin stays at the origin") {
    lpvid::Rng rng(3);
    const DataSet ds =
        lpvid::simulate_system(sys, Matrix::Zero(50, 1), 0.0, rng, 0.1);
    REQUIRE(ds.y.norm() == 0.0);
  }
  SECTION("scheduling map is sinc with value 1 at the origin") {
    REQUIRE(sys.scheduling(Vector::Zero(2), Vector::Zero(1))(0) == 1.0);
    lpvid::Rng rng(4);
    for (int i = 0; i < 50; ++i) {
      Vector x(2);
      x << rng.uniform(-3.0, 3.0), 0.0;
      const double p = sys.scheduling(x, Vector::Zero(1))(0);
      REQUIRE(-9.0 * p * x(0) ==
              Catch::Approx(-9.0 * std::sin(x(0))).margin(1e-12));
    }
  }
  SECTION("recorded oracle p satisfies the rewrite identity at every sample") {
    ExcitationConfig cfg;
    cfg.sample_time = 0.1;
    cfg.length = 300;
    lpvid::Rng rng(5);
    const Matrix u = lpvid::generate_excitation(cfg, rng);
    const DataSet ds = lpvid::simulate_system(sys, u, 0.0, rng, 0.1);
    // replay the state recursion and compare p
    Vector x = Vector::Zero(2);
    for (int k = 0; k < 300; ++k) {
      const double expect = x(0) == 0.0 ? 1.0 : std::sin(x(0)) / x(0);
      REQUIRE(ds.p(k, 0) == expect);
      x = sys.f(x, u.row(k).transpose(), Vector::Zero(1));
    }
  }
  SECTION("small-angle response matches the linear oscillator") {
    // Short horizon: the amplitude must stay small enough that the cubic
    // term of sin is negligible relative to the (growing) response.
    ExcitationConfig cfg;
    cfg.amplitude = 1e-5;
    cfg.noise_std = 0.0;
    cfg.sample_time = 0.1;
    cfg.length = 150;
    lpvid::Rng rng(6);
    const Matrix u = lpvid::generate_excitation(cfg, rng);
    const DataSet ds = lpvid::simulate_system(sys, u, 0.0, rng, 0.1);
    Matrix A(2, 2), B(2, 1), C(1, 2), D(1, 1);
    A << 1.0, 0.1, -0.9, 0.95;  // explicit Euler of the linearized dynamics
    B << 0.0, 0.5;
    C << 0.0, 1.0;
    D << 0.0;
    const Matrix y_lin =
        oracles::lti_simulate(A, B, C, D, Vector::Zero(2), u);
    const double scale = ds.y.cwiseAbs().maxCoeff();
    REQUIRE(scale > 0.0);
    REQUIRE((ds.y - y_lin).cwiseAbs().maxCoeff() < 1e-7 * scale);
  }
  SECTION("state explosion is reported with the step") {
    auto bad = lpvid::builtin_pendulum(9.0, -80.0, 5.0, 0.5);  // negative damping
    lpvid::Rng rng(7);
    REQUIRE_THROWS_AS(
        lpvid::simulate_system(bad, Matrix::Ones(5000, 1), 0.0, rng, 0.5),
        lpvid::DivergenceError);
  }
}

TEST_CASE("pilot-run noise solving hits the target SNR") {
  const auto sys = lpvid::builtin_pendulum();
  ExcitationConfig cfg;
  cfg.sample_time = 0.1;
  cfg.length = 4000;
  lpvid::Rng rng(8);
  const Matrix u = lpvid::generate_excitation(cfg, rng);
  const double sigma_e = lpvid::solve_noise_std_for_snr(sys, u, 35.0, 0.1);
  REQUIRE(sigma_e > 0.0);

  lpvid::Rng rng_noise(9);
  const DataSet noisy = lpvid::simulate_system(sys, u, sigma_e, rng_noise, 0.1);
  lpvid::Rng unused(10);
  const DataSet clean = lpvid::simulate_system(sys, u, 0.0, unused, 0.1);
  const Matrix w = noisy.y - clean.y;
  auto stdev = [](const Matrix& m) {
    const double mu = m.col(0).mean();
    return std::sqrt((m.col(0).array() - mu).square().sum() / (m.rows() - 1));
  };
  const double achieved = 20.0 * std::log10(stdev(clean.y) / stdev(w));
  REQUIRE(achieved == Catch::Approx(35.0).margin(0.5));
}

TEST_CASE("split_dataset: independent realizations, shared statistics") {
  const auto sys = lpvid::builtin_pendulum();
  ExcitationConfig cfg;
  cfg.sample_time = 0.1;
  NoiseSpec noise;
  noise.snr_db = 35.0;
  const auto splits =
      lpvid::split_dataset(sys, cfg, noise, 99, SplitSpec{100, 300, 300});

  REQUIRE(splits.est.n() == 100);
  REQUIRE(splits.val.n() == 300);
  REQUIRE(splits.test.n() == 300);
  REQUIRE(splits.est.role == "estimation");

  // independent realizations
  REQUIRE(splits.val.u.topRows(100) != splits.est.u);
  REQUIRE(splits.test.u.topRows(300) != splits.val.u);

  // statistics come from the estimation split and are copied
  const auto stats = lpvid::compute_normalization(splits.est);
  REQUIRE(splits.val.stats.y.mean == stats.y.mean);
  REQUIRE(splits.test.stats.u.stdev == stats.u.stdev);

  // estimation statistics do not center the validation outputs exactly
  const double val_mean_normed =
      splits.val.stats.norm_y_rows(splits.val.y).col(0).mean();
  REQUIRE(std::abs(val_mean_normed) > 1e-6);

  // deterministic and insensitive to adding/removing other splits
  const auto again =
      lpvid::split_dataset(sys, cfg, noise, 99, SplitSpec{100, 300, 50});
  REQUIRE(again.est.u == splits.est.u);
  REQUIRE(again.est.y == splits.est.y);
  REQUIRE(again.val.y == splits.val.y);
}

TEST_CASE("dataset CSV round-trips bit-exactly") {
  const auto sys = lpvid::builtin_pendulum();
  ExcitationConfig cfg;
  cfg.sample_time = 0.1;
  cfg.length = 64;
  lpvid::Rng rng(11);
  const Matrix u = lpvid::generate_excitation(cfg, rng);
  DataSet ds = lpvid::simulate_system(sys, u, 1e-3, rng, 0.1);

  const auto path = std::filesystem::temp_directory_path() / "lpvid_rt.csv";
  lpvid::write_dataset_csv(path.string(), ds);
  const DataSet back = lpvid::read_dataset_csv(path.string());
  REQUIRE(back.u == ds.u);
  REQUIRE(back.y == ds.y);
  REQUIRE(back.p == ds.p);
  std::filesystem::remove(path);
}

TEST_CASE("malformed CSV input reports the offending line") {
  namespace fs = std::filesystem;
  const auto path = fs::temp_directory_path() / "lpvid_bad.csv";
  {
    std::ofstream os(path);
    os << "k,u_1,y_1\n1,0.5,1.0\n2,not_a_number,1.0\n";
  }
  try {
    lpvid::read_dataset_csv(path.string());
    FAIL("expected DataError");
  } catch (const lpvid::DataError& e) {
    REQUIRE(e.line == 3);
  }
  {
    std::ofstream os(path);
    os << "k,y_1,u_1\n";  // wrong column order
  }
  REQUIRE_THROWS_AS(lpvid::read_dataset_csv(path.string()), lpvid::DataError);
  fs::remove(path);
}

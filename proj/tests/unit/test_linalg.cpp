#include <doctest.h>

#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "error.hpp"
#include "linalg.hpp"

using namespace fdcal;

namespace {

LowRankSystem random_system(std::mt19937_64& rng, int n, int u, double noise) {
  std::normal_distribution<double> z;
  LowRankSystem sys;
  sys.c_nu = Eigen::MatrixXd::NullaryExpr(n, u, [&] { return z(rng); });
  const Eigen::MatrixXd a = Eigen::MatrixXd::NullaryExpr(u, u, [&] { return z(rng); });
  sys.c_uu = a * a.transpose() + Eigen::MatrixXd::Identity(u, u);
  sys.noise_var = noise;
  return sys;
}

// independent dense construction of C_nu C_uu^-1 C_un + noise I
Eigen::MatrixXd dense_of(const LowRankSystem& s) {
  Eigen::MatrixXd d = s.c_nu * s.c_uu.inverse() * s.c_nu.transpose();
  d = 0.5 * (d + d.transpose()).eval();
  d.diagonal().array() += s.noise_var;
  return d;
}

}  // namespace

TEST_CASE("chol_jitter on simple matrices") {
  const auto id = chol_jitter(Eigen::Matrix2d::Identity());
  CHECK((id.lower - Eigen::Matrix2d::Identity()).norm() < 1e-7);
  Eigen::Matrix2d a;
  a << 4, 0, 0, 9;
  const auto f = chol_jitter(a);
  CHECK(f.lower(0, 0) == doctest::Approx(2.0));
  CHECK(f.lower(1, 1) == doctest::Approx(3.0));
  CHECK(f.jitter == 0.0);
  CHECK(f.log_det() == doctest::Approx(std::log(36.0)));
}

TEST_CASE("chol_jitter reconstructs a random SPD matrix") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> z;
  const Eigen::MatrixXd b = Eigen::MatrixXd::NullaryExpr(20, 20, [&] { return z(rng); });
  const Eigen::MatrixXd a = b * b.transpose() + 0.1 * Eigen::MatrixXd::Identity(20, 20);
  const auto f = chol_jitter(a);
  const Eigen::MatrixXd rr = f.lower * f.lower.transpose();
  CHECK((rr - a).cwiseAbs().maxCoeff() <= f.jitter + 1e-10);
  CHECK((f.lower.diagonal().array() > 0.0).all());
  CHECK(f.lower.triangularView<Eigen::StrictlyUpper>().toDenseMatrix().isZero());
}

TEST_CASE("chol_jitter escalates on a singular matrix and gives up on an indefinite one") {
  const Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(4, 4);
  const auto f = chol_jitter(ones);
  CHECK(f.jitter > 0.0);
  CHECK(f.jitter <= 1e-3);
  Eigen::Matrix2d bad;
  bad << 1, 0, 0, -1;
  CHECK_THROWS_AS(chol_jitter(bad), NumericalError);
  Eigen::Matrix2d nan = Eigen::Matrix2d::Identity();
  nan(0, 1) = NAN;
  CHECK_THROWS_AS(chol_jitter(nan), NumericalError);
}

TEST_CASE("woodbury solve degenerate cases") {
  LowRankSystem sys;
  sys.c_nu = Eigen::MatrixXd::Zero(6, 2);
  sys.c_uu = Eigen::Matrix2d::Identity();
  sys.noise_var = 4.0;
  const Eigen::VectorXd b = Eigen::VectorXd::LinSpaced(6, 1.0, 6.0);
  CHECK((woodbury_solve(sys, b) - b / 4.0).norm() < 1e-14);
  CHECK(woodbury_solve(sys, Eigen::VectorXd::Zero(6)).norm() == 0.0);
  CHECK(logdet_lowrank(sys) == doctest::Approx(6.0 * std::log(4.0)));
  sys.noise_var = 1.0;
  CHECK(std::abs(logdet_lowrank(sys)) < 1e-14);
}

TEST_CASE("woodbury solve and log-determinant match dense oracles") {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> z;
  for (auto [n, u] : {std::pair{50, 5}, std::pair{200, 20}, std::pair{3, 3}, std::pair{120, 1}}) {
    const auto sys = random_system(rng, n, u, 0.7);
    const Eigen::VectorXd b = Eigen::VectorXd::NullaryExpr(n, [&] { return z(rng); });
    const Eigen::MatrixXd d = dense_of(sys);
    const Eigen::VectorXd x = woodbury_solve(sys, b);
    CHECK((d * x - b).norm() < 1e-8 * b.norm());
    CHECK((x - d.ldlt().solve(b)).norm() < 1e-8 * x.norm());
    CHECK(std::abs(logdet_lowrank(sys) - std::log(d.determinant())) < 1e-8 * (1.0 + std::abs(logdet_lowrank(sys))));
  }
}

TEST_CASE("low-rank factor solves many right-hand sides at once") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> z;
  const auto sys = random_system(rng, 40, 6, 2.0);
  const Eigen::MatrixXd b = Eigen::MatrixXd::NullaryExpr(40, 3, [&] { return z(rng); });
  const LowRankFactor f(sys);
  CHECK((dense_of(sys) * f.solve(b) - b).norm() < 1e-9 * b.norm());
  CHECK(f.log_det() == doctest::Approx(logdet_lowrank(sys)));
  CHECK((dense_lowrank_matrix(sys) - dense_of(sys)).norm() < 1e-9 * dense_of(sys).norm());
  CHECK(dense_logdet(dense_of(sys)) == doctest::Approx(logdet_lowrank(sys)));
  const Eigen::VectorXd v = b.col(0);
  CHECK((dense_solve(dense_of(sys), v) - f.solve(v)).norm() < 1e-9 * v.norm());
}

TEST_CASE("low-rank systems validate their shapes") {
  LowRankSystem sys;
  sys.c_nu = Eigen::MatrixXd::Zero(5, 3);
  sys.c_uu = Eigen::Matrix2d::Identity();
  CHECK_THROWS_AS(woodbury_solve(sys, Eigen::VectorXd::Zero(5)), InvalidArgument);
  sys.c_uu = Eigen::Matrix3d::Identity();
  sys.noise_var = 0.0;
  CHECK_THROWS_AS(logdet_lowrank(sys), InvalidArgument);
  sys.noise_var = 1.0;
  CHECK_THROWS_AS(woodbury_solve(sys, Eigen::VectorXd::Zero(4)), InvalidArgument);
}

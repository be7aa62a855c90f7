#include <doctest.h>

#include <cmath>
#include <random>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "error.hpp"
#include "kernel.hpp"

using namespace fdcal;

TEST_CASE("se kernel values") {
  const SeKernel k(25.0, 10.0);
  CHECK(k(3.0, 3.0) == doctest::Approx(25.0));
  CHECK(k(0.0, 10.0) == doctest::Approx(25.0 * std::exp(-0.5)));
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> d(0.0, 150.0);
  for (int i = 0; i < 100; ++i) {
    const double a = d(rng), b = d(rng);
    CHECK(k(a, b) == k(b, a));
  }
  double prev = k(0.0, 0.0);
  for (double r = 0.5; r < 60.0; r += 0.5) {
    CHECK(k(0.0, r) <= prev);
    prev = k(0.0, r);
  }
}

TEST_CASE("kernel rejects non-positive hyperparameters") {
  CHECK_THROWS_AS(SeKernel(0.0, 1.0), InvalidArgument);
  CHECK_THROWS_AS(SeKernel(1.0, -1.0), InvalidArgument);
  CHECK_THROWS_AS(SeKernel(INFINITY, 1.0), InvalidArgument);
}

TEST_CASE("cross covariance matches elementwise evaluation") {
  const SeKernel k(4.0, 2.5);
  const Eigen::VectorXd xs = Eigen::VectorXd::LinSpaced(7, 0.0, 12.0);
  const Eigen::VectorXd ys = Eigen::VectorXd::LinSpaced(4, 1.0, 30.0);
  const Eigen::MatrixXd c = k.cross_cov(xs, ys);
  REQUIRE(c.rows() == 7);
  REQUIRE(c.cols() == 4);
  for (Eigen::Index i = 0; i < 7; ++i) {
    for (Eigen::Index j = 0; j < 4; ++j) CHECK(c(i, j) == doctest::Approx(k(xs[i], ys[j])));
  }
  const Eigen::MatrixXd one = SeKernel(4.0, 2.5).cross_cov(Eigen::VectorXd::Zero(1), Eigen::VectorXd::Constant(1, 2.5));
  CHECK(one(0, 0) == doctest::Approx(4.0 * std::exp(-0.5)));
}

TEST_CASE("square covariance is symmetric positive semi-definite with variance on the diagonal") {
  const SeKernel k(9.0, 3.0);
  const Eigen::Vector3d xs(1.0, 2.0, 7.0);
  const Eigen::MatrixXd c = k.cross_cov(xs, xs);
  CHECK((c - c.transpose()).norm() == 0.0);
  CHECK((c.diagonal().array() == 9.0).all());
  const Eigen::VectorXd many = Eigen::VectorXd::LinSpaced(60, 0.0, 150.0);
  const Eigen::MatrixXd big = k.cross_cov(many, many);
  CHECK(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(big).eigenvalues().minCoeff() > -1e-9);
}

TEST_CASE("log-lengthscale derivative matches finite differences") {
  const Eigen::VectorXd xs = Eigen::VectorXd::LinSpaced(5, 0.0, 20.0);
  const Eigen::VectorXd ys = Eigen::VectorXd::LinSpaced(3, 2.0, 17.0);
  const double ell = 6.0, h = 1e-6;
  const Eigen::MatrixXd d = SeKernel(3.0, ell).cross_cov_dlog_lengthscale(xs, ys);
  const Eigen::MatrixXd fd = (SeKernel(3.0, ell * std::exp(h)).cross_cov(xs, ys) -
                              SeKernel(3.0, ell * std::exp(-h)).cross_cov(xs, ys)) / (2.0 * h);
  CHECK((d - fd).norm() < 1e-6 * (1.0 + fd.norm()));
  Eigen::MatrixXd cov, dcov;
  SeKernel(3.0, ell).cross_cov_with_dlog(xs, ys, cov, dcov);
  CHECK((cov - SeKernel(3.0, ell).cross_cov(xs, ys)).norm() < 1e-14);
  CHECK((dcov - d).norm() < 1e-14);
}

TEST_CASE("nystrom self-approximation at the inducing points is exact") {
  const SeKernel k(25.0, 10.0);
  const Eigen::VectorXd z = Eigen::VectorXd::LinSpaced(8, 0.0, 150.0);
  const Eigen::MatrixXd kuu = k.cross_cov(z, z);
  const Eigen::MatrixXd approx = kuu * kuu.ldlt().solve(kuu);
  CHECK((approx - kuu).norm() < 1e-8 * kuu.norm());
}

TEST_CASE("kernel json round-trip") {
  const SeKernel k(12.5, 3.25);
  const auto back = se_kernel_from_json(to_json(k));
  CHECK(back.variance() == 12.5);
  CHECK(back.lengthscale() == 3.25);
}

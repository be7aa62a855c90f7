#include <doctest.h>

#include <cmath>
#include <random>

#include "error.hpp"
#include "fd_models.hpp"
#include "helpers.hpp"

using namespace fdcal;
using fdcal::test::reference_params;

TEST_CASE("closed-form values at landmark densities") {
  const ParamVector gs(FdModelKind::Greenshields, Eigen::Vector2d(60.0, 120.0));
  CHECK(evaluate(gs, 0.0) == doctest::Approx(60.0));
  CHECK(evaluate(gs, 120.0) == doctest::Approx(0.0));
  const ParamVector gb(FdModelKind::Greenberg, Eigen::Vector2d(30.0, 160.0));
  CHECK(evaluate(gb, 160.0) == doctest::Approx(0.0));
  const ParamVector nw(FdModelKind::Newell, Eigen::Vector3d(90.0, 160.0, 1500.0));
  CHECK(evaluate(nw, 160.0) == doctest::Approx(0.0).epsilon(1e-12));
  const ParamVector tp(FdModelKind::ThreePL, Eigen::Vector3d(90.0, 30.0, 15.0));
  CHECK(evaluate(tp, 30.0) == doctest::Approx(45.0));
  const ParamVector uw(FdModelKind::Underwood, Eigen::Vector2d(80.0, 30.0));
  CHECK(evaluate(uw, 30.0) == doctest::Approx(80.0 / std::exp(1.0)));
  const ParamVector nwst(FdModelKind::Northwestern, Eigen::Vector2d(80.0, 40.0));
  CHECK(evaluate(nwst, 40.0) == doctest::Approx(80.0 * std::exp(-0.5)));
}

TEST_CASE("greenberg is undefined at zero shifted density") {
  const ParamVector gb(FdModelKind::Greenberg, Eigen::Vector2d(30.0, 160.0));
  CHECK_THROWS_AS(evaluate(gb, 0.0), DomainError);
  CHECK(std::isfinite(evaluate(gb, 0.0, GreenbergShift{1.0})));
  CHECK(evaluate(gb, 159.0, GreenbergShift{1.0}) == doctest::Approx(0.0));
}

TEST_CASE("hand-derived greenshields and 3pl gradients") {
  const ParamVector gs(FdModelKind::Greenshields, Eigen::Vector2d(60.0, 120.0));
  const auto g = gradient(gs, 30.0);
  CHECK(g[0] == doctest::Approx(1.0 - 30.0 / 120.0));
  CHECK(g[1] == doctest::Approx(60.0 * 30.0 / (120.0 * 120.0)));
  const ParamVector tp(FdModelKind::ThreePL, Eigen::Vector3d(90.0, 30.0, 15.0));
  CHECK(gradient(tp, 30.0)[0] == doctest::Approx(0.5));
}

TEST_CASE("analytic gradients match central differences at 100 random points per model") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> jitter(-0.4, 0.4), kd(0.5, 150.0);
  for (FdModelKind kind : kAllModels) {
    CAPTURE(model_name(kind));
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
      Eigen::VectorXd b = reference_params(kind).values();
      for (auto& v : b) v *= std::exp(jitter(rng));
      const double k = kd(rng);
      Eigen::VectorXd g(b.size()), fd(b.size());
      evaluate_with_gradient(kind, b, k, g);
      for (Eigen::Index j = 0; j < b.size(); ++j) {
        const double h = 1e-5 * std::max(1.0, std::abs(b[j]));
        Eigen::VectorXd bp = b, bm = b;
        bp[j] += h;
        bm[j] -= h;
        fd[j] = (evaluate(kind, bp, k) - evaluate(kind, bm, k)) / (2.0 * h);
      }
      worst = std::max(worst, fdcal::test::rel_err(g, fd));
    }
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("flow is density times speed and vanishes at zero density") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> kd(0.5, 150.0);
  for (FdModelKind kind : kAllModels) {
    const auto p = reference_params(kind);
    for (int t = 0; t < 20; ++t) {
      const double k = kd(rng);
      CHECK(flow(p, k) == doctest::Approx(k * evaluate(p, k)));
    }
    if (kind != FdModelKind::Greenberg) CHECK(flow(p, 0.0) == 0.0);
  }
  const ParamVector gs(FdModelKind::Greenshields, Eigen::Vector2d(60.0, 120.0));
  CHECK(flow(gs, 60.0) > flow(gs, 59.0));
  CHECK(flow(gs, 60.0) > flow(gs, 61.0));
}

TEST_CASE("every model is non-increasing in density") {
  for (FdModelKind kind : kAllModels) {
    CAPTURE(model_name(kind));
    const auto p = reference_params(kind);
    double prev = evaluate(p, 0.05);
    bool monotone = true;
    for (double k = 0.1; k <= 160.0; k += 0.05) {
      const double v = evaluate(p, k);
      if (v > prev + 1e-12) monotone = false;
      prev = v;
    }
    CHECK(monotone);
  }
}

TEST_CASE("vectorized evaluation agrees with the scalar form") {
  const Eigen::VectorXd k = Eigen::VectorXd::LinSpaced(25, 1.0, 140.0);
  for (FdModelKind kind : kAllModels) {
    const auto p = reference_params(kind);
    const Eigen::VectorXd v = evaluate_all(kind, p.values(), k);
    const Eigen::MatrixXd jac = jacobian_all(kind, p.values(), k);
    for (Eigen::Index i = 0; i < k.size(); ++i) {
      CHECK(v[i] == doctest::Approx(evaluate(p, k[i])));
      CHECK((jac.row(i).transpose() - gradient(p, k[i])).norm() < 1e-12 * (1.0 + jac.row(i).norm()));
    }
  }
}

TEST_CASE("parameter vectors validate dimension and positivity") {
  CHECK_THROWS_AS(ParamVector(FdModelKind::Greenshields, Eigen::Vector3d(1, 2, 3)), InvalidArgument);
  CHECK_THROWS_AS(ParamVector(FdModelKind::Underwood, Eigen::Vector2d(80.0, -1.0)), InvalidArgument);
  CHECK_THROWS_AS(ParamVector(FdModelKind::Underwood, Eigen::Vector2d(80.0, NAN)), InvalidArgument);
  const ParamVector p(FdModelKind::Newell, Eigen::Vector3d(90.0, 160.0, 1500.0));
  CHECK(p.get("lambda") == 1500.0);
  CHECK_THROWS_AS(p.get("k_0"), InvalidArgument);
  CHECK(param_vector_from_json(FdModelKind::Newell, to_json(p)).values() == p.values());
}

TEST_CASE("model names parse and round-trip") {
  for (FdModelKind kind : kAllModels) CHECK(parse_model(model_name(kind)) == kind);
  CHECK(parse_model("GreenShields") == FdModelKind::Greenshields);
  CHECK_THROWS_AS(parse_model("drake"), InvalidArgument);
  CHECK(param_count(FdModelKind::ThreePL) == 3);
  CHECK(param_names(FdModelKind::Underwood)[1] == "k_0");
}

TEST_CASE("default initialization follows the data-driven rules") {
  std::vector<Observation> obs;
  for (int i = 0; i <= 150; ++i) obs.push_back({static_cast<double>(i), 100.0 - 0.6 * i});
  const Dataset ds(obs);
  const auto gs = default_init(FdModelKind::Greenshields, ds);
  CHECK(gs.get("k_j") == doctest::Approx(180.0));
  for (FdModelKind kind : kAllModels) {
    const auto p = default_init(kind, ds);
    CHECK((p.values().array() > 0.0).all());
  }
  const Dataset flat({{5.0, 50.0}, {5.0, 40.0}, {5.0, 45.0}});
  CHECK_THROWS_AS(default_init(FdModelKind::Greenshields, flat), InvalidArgument);
}

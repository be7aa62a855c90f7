#include <doctest.h>

#include <cmath>
#include <sstream>

#include "analysis.hpp"
#include "error.hpp"
#include "helpers.hpp"
#include "runner.hpp"

using namespace fdcal;

namespace {

Dataset line_data() {
  std::vector<Observation> obs;
  for (int i = 0; i < 20; ++i) obs.push_back({5.0 + 7.0 * i, 100.0 - 0.5 * (5.0 + 7.0 * i)});
  return Dataset(obs);
}

std::vector<std::string> split_lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  for (std::string line; std::getline(is, line);) out.push_back(line);
  return out;
}

}  // namespace

TEST_CASE("rmse is zero for a curve through every point") {
  const auto ds = line_data();
  const auto b = rmse_bins(ds, [](double k) { return 100.0 - 0.5 * k; });
  REQUIRE(b.rmse.size() == 10);
  for (const auto& r : b.rmse) {
    if (r) CHECK(*r == doctest::Approx(0.0));
  }
  CHECK(b.skipped == 0);
}

TEST_CASE("rmse by hand for two points in one bin") {
  const Dataset ds({{1.0, 10.0}, {2.0, 14.0}});
  const auto b = rmse_bins(ds, [](double) { return 11.0; }, {0.0, 15.0});
  REQUIRE(b.rmse[0]);
  CHECK(*b.rmse[0] == doctest::Approx(std::sqrt((1.0 + 9.0) / 2.0)));
  CHECK(b.counts[0] == 2);
}

TEST_CASE("one covering bin gives the global rmse") {
  const auto ds = fdcal::test::noisy_data(FdModelKind::Underwood, 300, 5);
  const auto p = fdcal::test::reference_params(FdModelKind::Underwood);
  const auto b = rmse_bins(ds, p, {0.0, 1000.0});
  double sse = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const double r = ds.speeds()[static_cast<Eigen::Index>(i)] - evaluate(p, ds.densities()[static_cast<Eigen::Index>(i)]);
    sse += r * r;
  }
  REQUIRE(b.rmse[0]);
  CHECK(*b.rmse[0] == doctest::Approx(std::sqrt(sse / static_cast<double>(ds.size()))).epsilon(1e-12));
}

TEST_CASE("empty bins carry no value and edge points follow the histogram rule") {
  const Dataset ds({{1.0, 5.0}, {15.0, 5.0}, {150.0, 5.0}});
  const auto b = rmse_bins(ds, [](double) { return 4.0; });
  CHECK(b.counts[0] == 1);
  CHECK(b.counts[1] == 1);
  CHECK(b.counts[9] == 1);
  CHECK_FALSE(b.rmse[4].has_value());
  const auto top = top_nonempty_bins(b, 2);
  REQUIRE(top.size() == 2);
  CHECK(top[0] == 1);
  CHECK(top[1] == 9);
  const auto j = to_json(b);
  CHECK(j["rmse"][4].is_null());
}

TEST_CASE("curve domain errors skip points") {
  const Dataset ds({{0.0, 30.0}, {100.0, 5.0}, {200.0, 1.0}});
  const ParamVector g(FdModelKind::Greenberg, Eigen::Vector2d(30.0, 160.0));
  const auto b = rmse_bins(ds, g, {0.0, 300.0});
  CHECK(b.skipped == 1);
  CHECK(b.counts[0] == 2);
}

TEST_CASE("rmse edges are validated") {
  const auto ds = line_data();
  auto f = [](double) { return 0.0; };
  CHECK_THROWS_AS(rmse_bins(ds, f, {1.0}), InvalidArgument);
  CHECK_THROWS_AS(rmse_bins(ds, f, {0.0, 10.0, 10.0}), InvalidArgument);
  CHECK_THROWS_AS(rmse_bins(ds, f, {10.0, 0.0}), InvalidArgument);
}

TEST_CASE("eti uses type-7 quantiles") {
  std::vector<double> x;
  for (int i = 1; i <= 11; ++i) x.push_back(i);
  auto [lo, hi] = eti(x, 0.8);
  CHECK(lo == doctest::Approx(2.0));
  CHECK(hi == doctest::Approx(10.0));
  std::tie(lo, hi) = eti({4.0, 1.0, 3.0, 2.0}, 0.5);
  CHECK(lo == doctest::Approx(1.75));
  CHECK(hi == doctest::Approx(3.25));
  CHECK_THROWS_AS(eti({}, 0.5), InvalidArgument);
  CHECK_THROWS_AS(eti({1.0}, 1.0), InvalidArgument);
  CHECK_THROWS_AS(eti({1.0}, 0.0), InvalidArgument);
}

TEST_CASE("posterior envelopes nest and flow is density times speed") {
  const auto ds = line_data();
  const auto grid = default_grid(ds, 50);
  CHECK(grid.front() == ds.min_density());
  CHECK(grid.back() == ds.max_density());
  Eigen::MatrixXd draws(400, 2);
  std::uint64_t s = 12345;
  auto uniform = [&s] {
    s = s * 6364136223846793005ULL + 1442695040888963407ULL;
    return static_cast<double>(s >> 11) / 9007199254740992.0;
  };
  for (int d = 0; d < draws.rows(); ++d) {
    draws(d, 0) = 90.0 + 20.0 * uniform();
    draws(d, 1) = 140.0 + 20.0 * uniform();
  }
  const auto sp = posterior_curves(FdModelKind::Greenshields, draws, grid, CurveTransform::Speed);
  const auto fl = posterior_curves(FdModelKind::Greenshields, draws, grid, CurveTransform::Flow);
  REQUIRE(sp.bands.size() == 3);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    REQUIRE(sp.valid[g]);
    CHECK(sp.bands[2].lower[g] <= sp.bands[1].lower[g]);
    CHECK(sp.bands[1].lower[g] <= sp.bands[0].lower[g]);
    CHECK(sp.bands[0].upper[g] <= sp.bands[1].upper[g]);
    CHECK(sp.bands[1].upper[g] <= sp.bands[2].upper[g]);
    CHECK(sp.mean[g] >= 0.0);
    CHECK(fl.mean[g] == doctest::Approx(grid[g] * sp.mean[g]));
    CHECK(fl.bands[2].upper[g] == doctest::Approx(grid[g] * sp.bands[2].upper[g]));
  }
  CHECK(mean_band_width(sp, 0.5) < mean_band_width(sp, 0.95));
  CHECK_THROWS_AS(mean_band_width(sp, 0.9), InvalidArgument);
}

TEST_CASE("envelope speeds are clamped at zero") {
  Eigen::MatrixXd draws(2, 2);
  draws << 100.0, 50.0, 100.0, 60.0;
  const auto env = posterior_curves(FdModelKind::Greenshields, draws, {10.0, 80.0}, CurveTransform::Speed, {0.5});
  CHECK(env.mean[1] == 0.0);
  CHECK(env.bands[0].lower[1] == 0.0);
}

TEST_CASE("envelope drops grid points where every draw is undefined") {
  Eigen::MatrixXd draws(3, 2);
  draws << 30.0, 100.0, 30.0, 110.0, 30.0, 120.0;
  const auto env = posterior_curves(FdModelKind::Greenberg, draws, {0.0, 50.0}, CurveTransform::Speed, {0.5});
  CHECK_FALSE(env.valid[0]);
  CHECK(env.valid[1]);
  const auto lines = split_lines(envelope_csv(env));
  REQUIRE(lines.size() == 2);
  CHECK(lines[0] == "density,value,lower_50,upper_50");
  CHECK(to_json(env)["invalid_points"] == 1);
}

TEST_CASE("posterior curve inputs are validated") {
  Eigen::MatrixXd draws(2, 3);
  draws.setOnes();
  CHECK_THROWS_AS(posterior_curves(FdModelKind::Greenshields, draws, {1.0, 2.0}, CurveTransform::Speed),
                  InvalidArgument);
  CHECK_THROWS_AS(posterior_curves(FdModelKind::Greenshields, Eigen::MatrixXd(0, 2), {1.0}, CurveTransform::Speed),
                  InvalidArgument);
  Eigen::MatrixXd ok(1, 2);
  ok << 100.0, 150.0;
  CHECK_THROWS_AS(posterior_curves(FdModelKind::Greenshields, ok, {2.0, 1.0}, CurveTransform::Speed),
                  InvalidArgument);
  CHECK_THROWS_AS(default_grid(line_data(), 1), InvalidArgument);
}

TEST_CASE("hyperparameter table round-trips through json") {
  HyperTable t;
  GpFit fit;
  fit.kind = FdModelKind::Newell;
  fit.hyper = GpHyper{SeKernel(40.0, 12.0), 2.0};
  t.add_mle(fit);
  t.add_mcmc(FdModelKind::Newell, {10.0, 14.0}, {30.0, 50.0});
  CHECK_THROWS_AS(t.add_mcmc(FdModelKind::Newell, {}, {1.0}), InvalidArgument);
  const auto back = HyperTable::from_json(t.to_json());
  REQUIRE(back.rows().size() == 2);
  const auto mle = back.find("newell", "mle");
  REQUIRE(mle);
  CHECK(mle->lengthscale == doctest::Approx(12.0));
  CHECK(mle->variance == doctest::Approx(40.0));
  const auto mcmc = back.find("newell", "mcmc");
  REQUIRE(mcmc);
  CHECK(mcmc->lengthscale == doctest::Approx(12.0));
  CHECK(mcmc->variance == doctest::Approx(40.0));
  CHECK_FALSE(back.find("3pl", "mle"));
}

TEST_CASE("run configuration json round-trip and validation") {
  RunConfig c;
  c.models = {FdModelKind::ThreePL, FdModelKind::Greenberg};
  c.methods = {FitMethod::Wls};
  c.inducing = 33;
  c.mcmc.nuts.draws = 77;
  c.mcmc.noise = NoiseKind::Gaussian;
  c.seed = 9;
  c.shift.k_s = 2.5;
  const auto back = run_config_from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));
  CHECK_THROWS_AS(run_config_from_json({{"bogus", 1}}), InvalidArgument);
  CHECK_THROWS_AS(run_config_from_json({{"seed", -1}}), InvalidArgument);
  CHECK_THROWS_AS(run_config_from_json({{"inducing", 2.5}}), InvalidArgument);
  CHECK_THROWS_AS(run_config_from_json({{"models", {"nope"}}}), InvalidArgument);
  CHECK_THROWS_AS(parse_noise("cauchy"), InvalidArgument);
  CHECK(noise_name(parse_noise("gaussian")) == "gaussian");

  auto bad = [](auto mutate) {
    RunConfig r;
    mutate(r);
    CHECK_THROWS_AS(r.validate(), InvalidArgument);
  };
  bad([](RunConfig& r) { r.models.clear(); });
  bad([](RunConfig& r) { r.methods = {FitMethod::Ls, FitMethod::Ls}; });
  bad([](RunConfig& r) { r.inducing = 1; });
  bad([](RunConfig& r) { r.mcmc.nuts.draws = 0; });
  bad([](RunConfig& r) { r.mcmc.nuts.target_accept = 1.0; });
  bad([](RunConfig& r) { r.bin_edges = {0.0, 0.0}; });
  bad([](RunConfig& r) { r.eti_levels = {1.5}; });
  bad([](RunConfig& r) { r.shift.k_s = -1.0; });
  RunConfig{}.validate();
}

TEST_CASE("seeds derive distinct reproducible streams") {
  CHECK(derive_seed(1, 0) == derive_seed(1, 0));
  CHECK(derive_seed(1, 0) != derive_seed(1, 1));
  CHECK(derive_seed(1, 0) != derive_seed(2, 0));
  CHECK(model_seed(5, FdModelKind::Underwood) != model_seed(5, FdModelKind::Newell));
}

TEST_CASE("chain csv has a header and one row per draw") {
  Eigen::MatrixXd rows(2, 2);
  rows << 1.0, 2.0, 3.0, 4.5;
  const auto lines = split_lines(chain_csv({"a", "b"}, rows));
  REQUIRE(lines.size() == 3);
  CHECK(lines[0] == "a,b");
  CHECK(lines[2].find("4.5") != std::string::npos);
}

TEST_CASE("calibration is reproducible and independent of thread count") {
  const auto ds = fdcal::test::noisy_data(FdModelKind::Underwood, 200, 2);
  RunConfig c;
  c.methods = {FitMethod::Ls, FitMethod::Wls, FitMethod::GpMle};
  c.threads = 1;
  c.seed = 3;
  const auto a = run_calibration(ds, c);
  c.threads = 4;
  const auto b = run_calibration(ds, c);
  auto strip = [](nlohmann::json j) {
    j["config"].erase("threads");
    return j;
  };
  CHECK(strip(a.report) == strip(b.report));
  REQUIRE(a.files.size() == b.files.size());
  for (std::size_t i = 0; i < a.files.size(); ++i) CHECK(a.files[i].content == b.files[i].content);
  CHECK(a.report["fits"].size() == 18);
  CHECK(a.all_converged);
  CHECK(a.report["dataset"]["n"] == 200);
}

TEST_CASE("calibration rejects invalid configurations") {
  const auto ds = fdcal::test::noisy_data(FdModelKind::Underwood, 50, 2);
  RunConfig c;
  c.eti_levels = {};
  CHECK_THROWS_AS(run_calibration(ds, c), InvalidArgument);
  const Dataset one({{1.0, 2.0}});
  CHECK_THROWS_AS(run_calibration(one, RunConfig{}), InvalidArgument);
}

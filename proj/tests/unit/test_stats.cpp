#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "error.hpp"
#include "stats.hpp"

using namespace fdcal;

TEST_CASE("type-7 quantiles") {
  const std::vector<double> x{4.0, 1.0, 3.0, 2.0};
  CHECK(quantile(x, 0.0) == 1.0);
  CHECK(quantile(x, 1.0) == 4.0);
  CHECK(quantile(x, 0.5) == doctest::Approx(2.5));
  CHECK(quantile(x, 0.25) == doctest::Approx(1.75));
  CHECK(quantile({7.0}, 0.3) == 7.0);
  CHECK_THROWS_AS(quantile({}, 0.5), InvalidArgument);
  CHECK_THROWS_AS(quantile(x, 1.5), InvalidArgument);
}

TEST_CASE("moments") {
  const std::vector<double> x{1.0, 2.0, 3.0, 4.0};
  CHECK(mean(x) == 2.5);
  CHECK(variance(x) == doctest::Approx(1.25));
  CHECK(sample_variance(x) == doctest::Approx(5.0 / 3.0));
}

TEST_CASE("effective sample size of independent and autocorrelated draws") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> z;
  std::vector<double> iid(4000), ar(4000);
  double prev = 0.0;
  for (std::size_t i = 0; i < iid.size(); ++i) {
    iid[i] = z(rng);
    prev = 0.9 * prev + z(rng);
    ar[i] = prev;
  }
  CHECK(effective_sample_size(iid) == doctest::Approx(4000.0).epsilon(0.15));
  // AR(1) with rho = 0.9: n (1 - rho) / (1 + rho)
  CHECK(effective_sample_size(ar) == doctest::Approx(4000.0 * 0.1 / 1.9).epsilon(0.35));
}

TEST_CASE("split r-hat near one for agreeing chains and large for disagreeing ones") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> z;
  std::vector<std::vector<double>> same(4, std::vector<double>(1000)), apart(4, std::vector<double>(1000));
  for (int c = 0; c < 4; ++c) {
    for (auto& v : same[c]) v = z(rng);
    for (auto& v : apart[c]) v = z(rng) + 3.0 * c;
  }
  CHECK(split_rhat(same) < 1.01);
  CHECK(split_rhat(apart) > 1.5);
  // a trend inside one chain shows up through the split
  std::vector<std::vector<double>> trend(1, std::vector<double>(1000));
  for (std::size_t i = 0; i < 1000; ++i) trend[0][i] = z(rng) + 0.01 * static_cast<double>(i);
  CHECK(split_rhat(trend) > 1.5);
}

TEST_CASE("geweke z separates stationary traces from trending ones") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> z;
  std::vector<double> flat(3000), drift(3000);
  for (std::size_t i = 0; i < flat.size(); ++i) {
    flat[i] = z(rng);
    drift[i] = z(rng) + 0.002 * static_cast<double>(i);
  }
  CHECK(std::abs(geweke_z(flat)) < 3.0);
  CHECK(std::abs(geweke_z(drift)) > 5.0);
  CHECK_THROWS_AS(geweke_z(std::vector<double>(10, 1.0)), InvalidArgument);
}

#include "stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "error.hpp"

namespace fdcal {

double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw InvalidArgument("quantile of empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("quantile level outside [0, 1]");
  const double h = static_cast<double>(sorted.size() - 1) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

double quantile(std::vector<double> values, double p) {
  std::sort(values.begin(), values.end());
  return quantile_sorted(values, p);
}

double mean(std::span<const double> x) {
  if (x.empty()) throw InvalidArgument("mean of empty sample");
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double variance(std::span<const double> x) {
  const double m = mean(x);
  double s = 0.0;
  for (double xi : x) s += (xi - m) * (xi - m);
  return s / static_cast<double>(x.size());
}

double sample_variance(std::span<const double> x) {
  if (x.size() < 2) throw InvalidArgument("sample variance needs at least 2 values");
  return variance(x) * static_cast<double>(x.size()) / static_cast<double>(x.size() - 1);
}

double effective_sample_size(std::span<const double> x) {
  const std::size_t n = x.size();
  if (n < 4) return static_cast<double>(n);
  const double m = mean(x);
  double c0 = 0.0;
  for (double xi : x) c0 += (xi - m) * (xi - m);
  c0 /= static_cast<double>(n);
  if (c0 <= 0.0) return static_cast<double>(n);

  auto autocorr = [&](std::size_t lag) {
    double s = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) s += (x[i] - m) * (x[i + lag] - m);
    return s / static_cast<double>(n) / c0;
  };

  // Geyer: sum consecutive pairs while they stay positive, enforcing monotonicity.
  double tau = -1.0;
  double prev_pair = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t + 1 < n; t += 2) {
    double pair = autocorr(t) + autocorr(t + 1);
    if (pair <= 0.0) break;
    pair = std::min(pair, prev_pair);
    prev_pair = pair;
    tau += 2.0 * pair;
  }
  tau = std::max(tau, 1.0 / std::log10(static_cast<double>(n)));
  return static_cast<double>(n) / tau;
}

double split_rhat(const std::vector<std::vector<double>>& chains) {
  std::vector<std::span<const double>> halves;
  for (const auto& c : chains) {
    const std::size_t h = c.size() / 2;
    if (h < 2) throw InvalidArgument("split R-hat needs chains of at least 4 draws");
    halves.emplace_back(c.data(), h);
    halves.emplace_back(c.data() + (c.size() - h), h);
  }
  const auto len = static_cast<double>(halves.front().size());
  const auto m = static_cast<double>(halves.size());
  std::vector<double> means;
  double w = 0.0;
  for (auto h : halves) {
    means.push_back(mean(h));
    w += sample_variance(h);
  }
  w /= m;
  const double b = len * sample_variance(means);
  if (w <= 0.0) return 1.0;
  const double var_plus = (len - 1.0) / len * w + b / len;
  return std::sqrt(var_plus / w);
}

namespace {

double batch_means_se(std::span<const double> x) {
  const std::size_t n = x.size();
  const auto batch = std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(n))));
  const std::size_t nb = n / batch;
  if (nb < 2) return std::sqrt(variance(x) / static_cast<double>(n));
  std::vector<double> bm(nb);
  for (std::size_t b = 0; b < nb; ++b) bm[b] = mean(x.subspan(b * batch, batch));
  return std::sqrt(sample_variance(bm) / static_cast<double>(nb));
}

}  // namespace

double geweke_z(std::span<const double> x, double first, double last) {
  const auto n = x.size();
  const auto na = static_cast<std::size_t>(first * static_cast<double>(n));
  const auto nb = static_cast<std::size_t>(last * static_cast<double>(n));
  if (na < 4 || nb < 4) throw InvalidArgument("trace too short for a split-mean check");
  auto a = x.first(na);
  auto b = x.last(nb);
  const double se = std::hypot(batch_means_se(a), batch_means_se(b));
  if (se == 0.0) return 0.0;
  return (mean(a) - mean(b)) / se;
}

}  // namespace fdcal

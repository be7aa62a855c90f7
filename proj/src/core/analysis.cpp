#include "analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "error.hpp"
#include "stats.hpp"

namespace fdcal {

namespace {

// Bin index of x under the histogram edge rule, or -1 when outside.
long bin_of(const std::vector<double>& edges, double x) {
  if (x < edges.front() || x > edges.back()) return -1;
  const auto it = std::upper_bound(edges.begin(), edges.end(), x);
  long j = static_cast<long>(it - edges.begin()) - 1;
  const long last = static_cast<long>(edges.size()) - 2;
  return std::min(j, last);
}

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

std::string level_tag(double level) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%g", 100.0 * level);
  return buf;
}

}  // namespace

std::vector<double> default_rmse_edges() {
  std::vector<double> e;
  for (int i = 0; i <= 10; ++i) e.push_back(15.0 * i);
  return e;
}

BinnedRmse rmse_bins(const Dataset& ds, const std::function<double(double)>& curve,
                     const std::vector<double>& edges) {
  if (edges.size() < 2) throw InvalidArgument("rmse_bins needs at least two edges");
  for (std::size_t i = 1; i < edges.size(); ++i) {
    if (!(edges[i] > edges[i - 1])) throw InvalidArgument("bin edges must be strictly ascending");
  }
  const std::size_t nb = edges.size() - 1;
  BinnedRmse out;
  out.edges = edges;
  out.counts.assign(nb, 0);
  std::vector<double> sse(nb, 0.0);
  const auto& k = ds.densities();
  const auto& v = ds.speeds();
  for (Eigen::Index i = 0; i < k.size(); ++i) {
    const long b = bin_of(edges, k[i]);
    if (b < 0) continue;
    double m;
    try {
      m = curve(k[i]);
    } catch (const DomainError&) {
      ++out.skipped;
      continue;
    }
    if (!std::isfinite(m)) {
      ++out.skipped;
      continue;
    }
    sse[b] += (v[i] - m) * (v[i] - m);
    ++out.counts[b];
  }
  out.rmse.resize(nb);
  for (std::size_t b = 0; b < nb; ++b) {
    if (out.counts[b] > 0) out.rmse[b] = std::sqrt(sse[b] / static_cast<double>(out.counts[b]));
  }
  return out;
}

BinnedRmse rmse_bins(const Dataset& ds, const ParamVector& beta, const std::vector<double>& edges,
                     GreenbergShift shift) {
  return rmse_bins(ds, [&](double k) { return evaluate(beta, k, shift); }, edges);
}

std::vector<std::size_t> top_nonempty_bins(const BinnedRmse& b, std::size_t count) {
  std::vector<std::size_t> idx;
  for (std::size_t j = b.rmse.size(); j-- > 0 && idx.size() < count;) {
    if (b.rmse[j]) idx.push_back(j);
  }
  std::reverse(idx.begin(), idx.end());
  return idx;
}

nlohmann::json to_json(const BinnedRmse& b) {
  nlohmann::json j;
  j["edges"] = b.edges;
  j["counts"] = b.counts;
  nlohmann::json r = nlohmann::json::array();
  for (const auto& x : b.rmse) r.push_back(x ? nlohmann::json(*x) : nlohmann::json());
  j["rmse"] = r;
  j["skipped"] = b.skipped;
  return j;
}

std::pair<double, double> eti(std::vector<double> samples, double level) {
  if (samples.empty()) throw InvalidArgument("eti of an empty sample");
  if (!(level > 0.0 && level < 1.0)) throw InvalidArgument("eti level must lie in (0, 1)");
  std::sort(samples.begin(), samples.end());
  const double a = 0.5 * (1.0 - level);
  return {quantile_sorted(samples, a), quantile_sorted(samples, 1.0 - a)};
}

std::vector<double> default_grid(const Dataset& ds, std::size_t n) {
  if (n < 2) throw InvalidArgument("grid needs at least two points");
  const double lo = ds.min_density(), hi = ds.max_density();
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i) {
    g[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  }
  g.back() = hi;
  return g;
}

CurveEnvelope posterior_curves(FdModelKind kind, const Eigen::MatrixXd& beta_draws,
                               const std::vector<double>& grid, CurveTransform transform,
                               const std::vector<double>& levels, GreenbergShift shift) {
  if (beta_draws.rows() == 0) throw InvalidArgument("posterior_curves needs at least one draw");
  if (beta_draws.cols() != static_cast<Eigen::Index>(param_count(kind))) {
    throw InvalidArgument("draw width does not match the model");
  }
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (grid[i] < grid[i - 1]) throw InvalidArgument("grid must be ascending");
  }
  std::vector<double> sorted_levels = levels;
  std::sort(sorted_levels.begin(), sorted_levels.end());

  CurveEnvelope env;
  env.transform = transform;
  env.grid = grid;
  env.mean.assign(grid.size(), std::numeric_limits<double>::quiet_NaN());
  env.valid.assign(grid.size(), false);
  for (double l : sorted_levels) {
    env.bands.push_back({l, std::vector<double>(grid.size(), std::numeric_limits<double>::quiet_NaN()),
                         std::vector<double>(grid.size(), std::numeric_limits<double>::quiet_NaN())});
  }
  std::vector<double> vals;
  vals.reserve(static_cast<std::size_t>(beta_draws.rows()));
  for (std::size_t g = 0; g < grid.size(); ++g) {
    vals.clear();
    const double k = grid[g];
    for (Eigen::Index d = 0; d < beta_draws.rows(); ++d) {
      double m;
      try {
        m = evaluate(kind, beta_draws.row(d).transpose(), k, shift);
      } catch (const DomainError&) {
        continue;
      }
      if (!std::isfinite(m)) continue;
      m = std::max(m, 0.0);
      vals.push_back(transform == CurveTransform::Flow ? k * m : m);
    }
    if (vals.empty()) continue;
    env.valid[g] = true;
    env.mean[g] = mean(vals);
    std::sort(vals.begin(), vals.end());
    for (auto& band : env.bands) {
      const double a = 0.5 * (1.0 - band.level);
      band.lower[g] = quantile_sorted(vals, a);
      band.upper[g] = quantile_sorted(vals, 1.0 - a);
    }
  }
  return env;
}

double mean_band_width(const CurveEnvelope& env, double level) {
  for (const auto& b : env.bands) {
    if (std::abs(b.level - level) > 1e-12) continue;
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t g = 0; g < env.grid.size(); ++g) {
      if (!env.valid[g]) continue;
      s += b.upper[g] - b.lower[g];
      ++n;
    }
    if (n == 0) throw InvalidArgument("envelope has no valid grid points");
    return s / static_cast<double>(n);
  }
  throw InvalidArgument("envelope has no band at level " + fmt(level));
}

std::string envelope_csv(const CurveEnvelope& env) {
  std::string out = "density,value";
  for (const auto& b : env.bands) {
    out += ",lower_" + level_tag(b.level) + ",upper_" + level_tag(b.level);
  }
  out += '\n';
  for (std::size_t g = 0; g < env.grid.size(); ++g) {
    if (!env.valid[g]) continue;
    out += fmt(env.grid[g]) + ',' + fmt(env.mean[g]);
    for (const auto& b : env.bands) out += ',' + fmt(b.lower[g]) + ',' + fmt(b.upper[g]);
    out += '\n';
  }
  return out;
}

nlohmann::json to_json(const CurveEnvelope& env) {
  nlohmann::json j;
  j["transform"] = env.transform == CurveTransform::Speed ? "speed" : "flow";
  j["grid_points"] = env.grid.size();
  std::size_t invalid = 0;
  for (bool v : env.valid) invalid += v ? 0 : 1;
  j["invalid_points"] = invalid;
  nlohmann::json widths = nlohmann::json::object();
  for (const auto& b : env.bands) {
    if (invalid < env.grid.size()) widths[level_tag(b.level)] = mean_band_width(env, b.level);
  }
  j["mean_band_width"] = widths;
  return j;
}

void HyperTable::add_mle(const GpFit& fit) {
  rows_.push_back({std::string(model_name(fit.kind)), "mle", fit.hyper.kernel.lengthscale(),
                   fit.hyper.kernel.variance()});
}

void HyperTable::add_mcmc(FdModelKind kind, const std::vector<double>& lengthscale_draws,
                          const std::vector<double>& variance_draws) {
  if (lengthscale_draws.empty() || variance_draws.empty()) {
    throw InvalidArgument("hyperparameter draws are empty");
  }
  rows_.push_back({std::string(model_name(kind)), "mcmc", mean(lengthscale_draws), mean(variance_draws)});
}

std::optional<HyperRow> HyperTable::find(std::string_view model, std::string_view method) const {
  for (const auto& r : rows_) {
    if (r.model == model && r.method == method) return r;
  }
  return std::nullopt;
}

nlohmann::json HyperTable::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows_) {
    arr.push_back({{"model", r.model}, {"method", r.method}, {"lengthscale", r.lengthscale},
                   {"variance", r.variance}});
  }
  return arr;
}

HyperTable HyperTable::from_json(const nlohmann::json& j) {
  HyperTable t;
  for (const auto& r : j) {
    t.rows_.push_back({r.at("model").get<std::string>(), r.at("method").get<std::string>(),
                       r.at("lengthscale").get<double>(), r.at("variance").get<double>()});
  }
  return t;
}

}  // namespace fdcal

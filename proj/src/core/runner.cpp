#include "runner.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <mutex>
#include <set>
#include <thread>

#include "error.hpp"
#include "stats.hpp"

namespace fdcal {

namespace {

constexpr int kSchemaVersion = 1;

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

unsigned worker_count(unsigned requested, std::size_t tasks) {
  unsigned n = requested ? requested : std::max(1u, std::thread::hardware_concurrency());
  return static_cast<unsigned>(std::min<std::size_t>(n, std::max<std::size_t>(tasks, 1)));
}

// Runs fn(0..tasks-1) on a bounded set of threads. The first exception is rethrown.
void parallel_for(std::size_t tasks, unsigned threads, const std::function<void(std::size_t)>& fn) {
  const unsigned workers = worker_count(threads, tasks);
  if (workers <= 1) {
    for (std::size_t i = 0; i < tasks; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::mutex err_mutex;
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < tasks;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mutex);
          if (!err) err = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

std::string curve_csv(const ParamVector& beta, const std::vector<double>& grid, GreenbergShift shift) {
  std::string out = "density,value,flow\n";
  for (double k : grid) {
    double m;
    try {
      m = evaluate(beta, k, shift);
    } catch (const DomainError&) {
      continue;
    }
    if (!std::isfinite(m)) continue;
    out += fmt(k) + ',' + fmt(m) + ',' + fmt(k * m) + '\n';
  }
  return out;
}

std::string stem(FdModelKind kind, FitMethod m) {
  return std::string(model_name(kind)) + "_" + std::string(method_name(m));
}

}  // namespace

std::string_view noise_name(NoiseKind k) { return k == NoiseKind::Gaussian ? "gaussian" : "student-t"; }

NoiseKind parse_noise(std::string_view name) {
  if (name == "gaussian") return NoiseKind::Gaussian;
  if (name == "student-t" || name == "t") return NoiseKind::StudentT;
  throw InvalidArgument("unknown noise model '" + std::string(name) + "' (gaussian, student-t)");
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  // splitmix64 finalizer over a seed/index mix
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

void RunConfig::validate() const {
  if (models.empty()) throw InvalidArgument("at least one model is required");
  if (methods.empty()) throw InvalidArgument("at least one method is required");
  if (std::set<FdModelKind>(models.begin(), models.end()).size() != models.size()) {
    throw InvalidArgument("duplicate model in the model list");
  }
  if (std::set<FitMethod>(methods.begin(), methods.end()).size() != methods.size()) {
    throw InvalidArgument("duplicate method in the method list");
  }
  if (inducing < 2) throw InvalidArgument("inducing count must be at least 2");
  if (mcmc.nuts.burn_in < 0) throw InvalidArgument("burn-in must be non-negative");
  if (mcmc.nuts.draws < 1) throw InvalidArgument("draws must be positive");
  if (!(mcmc.nuts.target_accept > 0.0 && mcmc.nuts.target_accept < 1.0)) {
    throw InvalidArgument("target acceptance must lie in (0, 1)");
  }
  if (mcmc.nuts.max_depth < 1 || mcmc.nuts.max_depth > 20) {
    throw InvalidArgument("max tree depth must lie in [1, 20]");
  }
  if (mcmc.chains < 1) throw InvalidArgument("chains must be positive");
  if (!(mcmc.max_divergence_fraction >= 0.0 && mcmc.max_divergence_fraction <= 1.0)) {
    throw InvalidArgument("divergence fraction must lie in [0, 1]");
  }
  if (bin_edges.size() < 2) throw InvalidArgument("at least two bin edges are required");
  for (std::size_t i = 1; i < bin_edges.size(); ++i) {
    if (!(bin_edges[i] > bin_edges[i - 1])) throw InvalidArgument("bin edges must be strictly ascending");
  }
  if (eti_levels.empty()) throw InvalidArgument("at least one ETI level is required");
  for (double l : eti_levels) {
    if (!(l > 0.0 && l < 1.0)) throw InvalidArgument("ETI levels must lie in (0, 1)");
  }
  if (grid_points < 2) throw InvalidArgument("grid needs at least two points");
  if (!std::isfinite(shift.k_s) || shift.k_s < 0.0) throw InvalidArgument("k_s must be non-negative");
}

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j;
  std::vector<std::string> models, methods;
  for (auto m : c.models) models.emplace_back(model_name(m));
  for (auto m : c.methods) methods.emplace_back(method_name(m));
  j["models"] = models;
  j["methods"] = methods;
  j["inducing"] = c.inducing;
  j["burn_in"] = c.mcmc.nuts.burn_in;
  j["draws"] = c.mcmc.nuts.draws;
  j["target_accept"] = c.mcmc.nuts.target_accept;
  j["max_depth"] = c.mcmc.nuts.max_depth;
  j["adapt_metric"] = c.mcmc.nuts.adapt_metric;
  j["dense_metric"] = c.mcmc.nuts.dense_metric;
  j["chains"] = c.mcmc.chains;
  j["noise"] = std::string(noise_name(c.mcmc.noise));
  j["max_divergence_fraction"] = c.mcmc.max_divergence_fraction;
  j["bin_edges"] = c.bin_edges;
  j["eti_levels"] = c.eti_levels;
  j["grid_points"] = c.grid_points;
  j["k_s"] = c.shift.k_s;
  j["threads"] = c.threads;
  j["seed"] = c.seed;
  return j;
}

RunConfig run_config_from_json(const nlohmann::json& j, RunConfig c) {
  if (!j.is_object()) throw InvalidArgument("run configuration must be a JSON object");
  static const std::set<std::string> known = {
      "models", "methods", "inducing", "burn_in", "draws", "target_accept", "max_depth",
      "adapt_metric", "dense_metric", "chains", "noise", "max_divergence_fraction", "bin_edges", "eti_levels",
      "grid_points", "k_s", "threads", "seed"};
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw InvalidArgument("unknown configuration key '" + key + "'");
  }
  for (const char* key : {"inducing", "grid_points", "threads", "seed"}) {
    if (j.contains(key) && !j.at(key).is_number_unsigned()) {
      throw InvalidArgument(std::string("configuration key '") + key + "' must be a non-negative integer");
    }
  }
  try {
    if (j.contains("models")) {
      c.models.clear();
      for (const auto& m : j.at("models")) c.models.push_back(parse_model(m.get<std::string>()));
    }
    if (j.contains("methods")) {
      c.methods.clear();
      for (const auto& m : j.at("methods")) c.methods.push_back(parse_method(m.get<std::string>()));
    }
    c.inducing = j.value("inducing", c.inducing);
    c.mcmc.nuts.burn_in = j.value("burn_in", c.mcmc.nuts.burn_in);
    c.mcmc.nuts.draws = j.value("draws", c.mcmc.nuts.draws);
    c.mcmc.nuts.target_accept = j.value("target_accept", c.mcmc.nuts.target_accept);
    c.mcmc.nuts.max_depth = j.value("max_depth", c.mcmc.nuts.max_depth);
    c.mcmc.nuts.adapt_metric = j.value("adapt_metric", c.mcmc.nuts.adapt_metric);
    c.mcmc.nuts.dense_metric = j.value("dense_metric", c.mcmc.nuts.dense_metric);
    c.mcmc.chains = j.value("chains", c.mcmc.chains);
    if (j.contains("noise")) c.mcmc.noise = parse_noise(j.at("noise").get<std::string>());
    c.mcmc.max_divergence_fraction = j.value("max_divergence_fraction", c.mcmc.max_divergence_fraction);
    if (j.contains("bin_edges")) c.bin_edges = j.at("bin_edges").get<std::vector<double>>();
    if (j.contains("eti_levels")) c.eti_levels = j.at("eti_levels").get<std::vector<double>>();
    c.grid_points = j.value("grid_points", c.grid_points);
    c.shift.k_s = j.value("k_s", c.shift.k_s);
    c.threads = j.value("threads", c.threads);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("bad configuration value: ") + e.what());
  }
  return c;
}

std::vector<double> SampleOutput::pooled(std::string_view column) const {
  const auto it = std::find(columns.begin(), columns.end(), column);
  if (it == columns.end()) throw InvalidArgument("no chain column named '" + std::string(column) + "'");
  const auto c = static_cast<Eigen::Index>(it - columns.begin());
  std::vector<double> out;
  for (const auto& r : rows) {
    for (Eigen::Index i = 0; i < r.rows(); ++i) out.push_back(r(i, c));
  }
  return out;
}

Eigen::MatrixXd SampleOutput::pooled_beta() const {
  const auto p = static_cast<Eigen::Index>(param_count(kind));
  Eigen::Index total = 0;
  for (const auto& r : rows) total += r.rows();
  Eigen::MatrixXd out(total, p);
  Eigen::Index at = 0;
  for (const auto& r : rows) {
    out.middleRows(at, r.rows()) = r.leftCols(p);
    at += r.rows();
  }
  return out;
}

std::string chain_csv(const std::vector<std::string>& columns, const Eigen::MatrixXd& rows) {
  std::string out;
  for (std::size_t c = 0; c < columns.size(); ++c) out += (c ? "," : "") + columns[c];
  out += '\n';
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    for (Eigen::Index c = 0; c < rows.cols(); ++c) out += (c ? "," : "") + fmt(rows(i, c));
    out += '\n';
  }
  return out;
}

SampleOutput run_sampling(const Dataset& ds, FdModelKind kind, const RunConfig& cfg,
                          std::uint64_t seed, const SampleInit& init) {
  if (ds.size() < param_count(kind) + 3) throw InvalidArgument("too few observations to sample");
  const double range = ds.max_density() - ds.min_density();
  const double var_v = ds.speed_variance();
  if (!(range > 0.0) || !(var_v > 0.0)) throw InvalidArgument("degenerate dataset");

  ParamVector center;
  if (init.prior_center) {
    center = *init.prior_center;
  } else {
    LsOptions lo;
    lo.shift = cfg.shift;
    lo.seed = seed;
    center = fit_wls(kind, ds, default_init(kind, ds), lo).beta;
  }
  const ParamVector beta0 = init.beta ? *init.beta : center;
  const double ell0 = init.hyper ? init.hyper->kernel.lengthscale() : range / 10.0;
  const double var0 = init.hyper ? init.hyper->kernel.variance() : var_v / 2.0;
  const double noise_var0 = init.hyper ? init.hyper->noise_var : var_v / 2.0;

  NoiseModel noise;
  noise.kind = cfg.mcmc.noise;
  noise.variance = noise_var0;
  noise.scale = std::sqrt(noise_var0);
  noise.dof = 4.0;
  BayesOptions bo;
  bo.shift = cfg.shift;
  const InducingSet inducing = default_inducing(ds, cfg.inducing);
  const WhitenedSparseGp model(kind, ds, inducing, PriorSpec::centered_on(center), noise, bo);
  const Eigen::VectorXd start = model.initial_state(beta0, ell0, var0, noise);

  SampleOutput out;
  out.kind = kind;
  out.columns = model.column_names();
  const int nch = cfg.mcmc.chains;
  out.chains.resize(static_cast<std::size_t>(nch));
  out.rows.resize(static_cast<std::size_t>(nch));
  std::vector<std::uint64_t> seeds;
  for (int c = 0; c < nch; ++c) seeds.push_back(derive_seed(seed, static_cast<std::uint64_t>(c)));

  const LogDensity target = [&model](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    return model.log_q(x, g);
  };
  // All chains start from the posterior mode with a Laplace metric; burn-in adapts from there.
  const LaplaceStart ls = laplace_start(target, start);
  const Eigen::VectorXd& x0 = ls.x;
  parallel_for(static_cast<std::size_t>(nch), cfg.threads, [&](std::size_t c) {
    NutsConfig nc = cfg.mcmc.nuts;
    nc.seed = seeds[c];
    nc.initial_inverse_metric = ls.inverse_metric;
    out.chains[c] = nuts_sample(target, x0, nc);
    const auto& d = out.chains[c].draws;
    Eigen::MatrixXd rows(d.rows(), static_cast<Eigen::Index>(out.columns.size()));
    for (Eigen::Index i = 0; i < d.rows(); ++i) rows.row(i) = model.constrained_row(d.row(i).transpose()).transpose();
    out.rows[c] = std::move(rows);
  });

  // Diagnostics over the scalar (non-whitened) columns.
  const std::size_t scalar_cols = out.columns.size() - model.num_inducing();
  nlohmann::json diag;
  diag["model"] = std::string(model_name(kind));
  diag["noise"] = std::string(noise_name(noise.kind));
  diag["burn_in"] = cfg.mcmc.nuts.burn_in;
  diag["draws"] = cfg.mcmc.nuts.draws;
  diag["target_accept"] = cfg.mcmc.nuts.target_accept;
  diag["max_depth"] = cfg.mcmc.nuts.max_depth;
  diag["adapt_metric"] = cfg.mcmc.nuts.adapt_metric;
  diag["dense_metric"] = cfg.mcmc.nuts.dense_metric;
  diag["chains"] = nch;
  diag["run_seed"] = seed;
  diag["seeds"] = seeds;
  diag["inducing_count"] = inducing.size();
  diag["inducing"] = to_std(inducing.locations());
  diag["prior_center"] = to_json(center);
  diag["start_at_mode"] = ls.mode_found;
  diag["columns"] = out.columns;

  bool ok = true;
  // Bonferroni-corrected two-sided 5% test across the scalar columns.
  const double z_crit = [&] {
    const double m = static_cast<double>(scalar_cols);
    const double p = 0.05 / m;
    // inverse normal tail by bisection on erfc
    double lo = 0.0, hi = 10.0;
    for (int i = 0; i < 100; ++i) {
      const double mid = 0.5 * (lo + hi);
      (std::erfc(mid / std::sqrt(2.0)) > p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  }();
  nlohmann::json per_chain = nlohmann::json::array();
  bool stationary = true;
  for (int c = 0; c < nch; ++c) {
    const auto& ch = out.chains[static_cast<std::size_t>(c)];
    const auto& rows = out.rows[static_cast<std::size_t>(c)];
    nlohmann::json cj;
    cj["seed"] = seeds[static_cast<std::size_t>(c)];
    cj["draws"] = rows.rows();
    cj["acceptance_rate"] = ch.mean_accept();
    cj["divergences"] = ch.divergence_count();
    cj["step_size"] = ch.step_size;
    double depth = 0.0;
    for (int t : ch.tree_depth) depth += t;
    cj["mean_tree_depth"] = depth / static_cast<double>(std::max<std::size_t>(ch.tree_depth.size(), 1));
    nlohmann::json gz, ess;
    for (std::size_t col = 0; col < scalar_cols; ++col) {
      std::vector<double> tr(static_cast<std::size_t>(rows.rows()));
      for (Eigen::Index i = 0; i < rows.rows(); ++i) tr[static_cast<std::size_t>(i)] = rows(i, static_cast<Eigen::Index>(col));
      double z = std::numeric_limits<double>::quiet_NaN();
      if (tr.size() >= 20) z = geweke_z(tr);
      gz[out.columns[col]] = std::isfinite(z) ? nlohmann::json(z) : nlohmann::json();
      if (std::isfinite(z) && std::abs(z) > z_crit) stationary = false;
      ess[out.columns[col]] = effective_sample_size(tr);
    }
    cj["geweke_z"] = gz;
    cj["ess"] = ess;
    const double frac = static_cast<double>(ch.divergence_count()) / static_cast<double>(rows.rows());
    if (frac > cfg.mcmc.max_divergence_fraction) ok = false;
    per_chain.push_back(cj);
  }
  diag["per_chain"] = per_chain;
  diag["geweke_critical_z"] = z_crit;
  diag["stationary"] = stationary;

  nlohmann::json post_mean, eti95;
  for (std::size_t col = 0; col < scalar_cols; ++col) {
    const auto v = out.pooled(out.columns[col]);
    post_mean[out.columns[col]] = mean(v);
    const auto [lo, hi] = eti(v, 0.95);
    eti95[out.columns[col]] = {lo, hi};
  }
  diag["posterior_mean"] = post_mean;
  diag["eti_95"] = eti95;
  if (nch >= 2) {
    nlohmann::json rh;
    double worst = 0.0;
    for (std::size_t col = 0; col < scalar_cols; ++col) {
      std::vector<std::vector<double>> traces;
      for (const auto& r : out.rows) {
        const Eigen::VectorXd cv = r.col(static_cast<Eigen::Index>(col));
        traces.push_back(to_std(cv));
      }
      const double v = split_rhat(traces);
      rh[out.columns[col]] = v;
      if (std::isfinite(v)) worst = std::max(worst, v);
    }
    diag["rhat"] = rh;
    diag["rhat_max"] = worst;
  }
  int total_div = 0;
  for (const auto& ch : out.chains) total_div += ch.divergence_count();
  diag["divergences"] = total_div;
  diag["ok"] = ok;
  if (!ok) diag["error"] = "divergent transitions exceed the allowed fraction of draws";
  out.diagnostics = std::move(diag);
  out.ok = ok;

  const std::string base = "chain_" + std::string(model_name(kind));
  for (int c = 0; c < nch; ++c) {
    const std::string name = nch == 1 ? base + ".csv" : base + "_" + std::to_string(c) + ".csv";
    out.files.push_back({name, chain_csv(out.columns, out.rows[static_cast<std::size_t>(c)])});
  }
  return out;
}

nlohmann::json dataset_summary(const Dataset& ds, const LoadStats* load_stats) {
  nlohmann::json j;
  j["n"] = ds.size();
  if (!ds.empty()) {
    j["min_density"] = ds.min_density();
    j["max_density"] = ds.max_density();
    j["speed_mean"] = ds.speeds().mean();
    j["speed_variance"] = ds.speed_variance();
    const double hi = std::max(ds.max_density(), 20.0) + 1.0;
    const auto counts = histogram(ds, {0.0, 20.0, hi});
    j["share_below_20"] = static_cast<double>(counts[0]) / static_cast<double>(ds.size());
  }
  if (load_stats) {
    j["raw_rows"] = load_stats->raw_rows;
    j["rejected_rows"] = load_stats->rejected_rows;
    j["accepted_rows"] = load_stats->accepted_rows;
  }
  return j;
}

namespace {

struct FitRecord {
  FitMethod method;
  nlohmann::json json;
  bool converged = false;
  std::optional<ParamVector> beta;
  std::optional<GpFit> gp;
  std::optional<std::pair<std::vector<double>, std::vector<double>>> mcmc_hyper;
};

struct ModelOutcome {
  std::vector<FitRecord> fits;
  std::vector<OutputFile> files;
};

std::string_view error_kind(const std::exception& e) {
  const auto* err = dynamic_cast<const Error*>(&e);
  if (!err) return "internal";
  switch (err->code()) {
    case ErrorCode::InvalidArgument: return "invalid_argument";
    case ErrorCode::Io: return "io";
    case ErrorCode::Parse: return "parse";
    case ErrorCode::Domain: return "domain";
    case ErrorCode::Numerical: return "numerical";
    case ErrorCode::NotConverged: return "not_converged";
  }
  return "internal";
}

nlohmann::json failure_json(FdModelKind kind, FitMethod m, const std::exception& e) {
  return {{"model", std::string(model_name(kind))},
          {"method", std::string(method_name(m))},
          {"status", "failed"},
          {"converged", false},
          {"error", e.what()},
          {"error_kind", std::string(error_kind(e))}};
}

}  // namespace

std::uint64_t model_seed(std::uint64_t run_seed, FdModelKind kind) {
  const auto index = static_cast<std::uint64_t>(
      std::find(kAllModels.begin(), kAllModels.end(), kind) - kAllModels.begin());
  return derive_seed(run_seed, index);
}

SampleOutput sample_model(const Dataset& ds, FdModelKind kind, const RunConfig& cfg) {
  const std::uint64_t seed = model_seed(cfg.seed, kind);
  LsOptions lo;
  lo.shift = cfg.shift;
  lo.seed = seed;
  SampleInit si;
  try {
    const auto wls = fit_wls(kind, ds, default_init(kind, ds), lo);
    si.prior_center = wls.beta;
    GpMleOptions go;
    go.shift = cfg.shift;
    go.init = wls.beta;
    if (ds.size() > cfg.inducing) go.inducing = default_inducing(ds, cfg.inducing);
    const auto mle = fit_gp_mle(kind, ds, go);
    si.beta = mle.beta;
    si.hyper = mle.hyper;
  } catch (const InvalidArgument&) {
    throw;
  } catch (const std::exception&) {
    // fall back to data-driven starting values
  }
  return run_sampling(ds, kind, cfg, derive_seed(seed, 1000), si);
}

namespace {

ModelOutcome run_model(const Dataset& ds, FdModelKind kind, const RunConfig& cfg,
                       std::uint64_t seed, const std::vector<double>& grid) {
  ModelOutcome out;
  auto wants = [&](FitMethod m) {
    return std::find(cfg.methods.begin(), cfg.methods.end(), m) != cfg.methods.end();
  };
  LsOptions lo;
  lo.shift = cfg.shift;
  lo.seed = seed;

  // Shared intermediate results; failures here surface on the methods that need them.
  std::optional<FitResult> wls;
  std::exception_ptr wls_error;
  if (wants(FitMethod::Wls) || wants(FitMethod::GpMle) || wants(FitMethod::GpMcmc)) {
    try {
      wls = fit_wls(kind, ds, default_init(kind, ds), lo);
    } catch (const std::exception&) {
      wls_error = std::current_exception();
    }
  }
  std::optional<GpFit> mle;
  std::exception_ptr mle_error;
  if (wants(FitMethod::GpMle) || wants(FitMethod::GpMcmc)) {
    try {
      GpMleOptions go;
      go.shift = cfg.shift;
      if (wls) go.init = wls->beta;
      if (ds.size() > cfg.inducing) go.inducing = default_inducing(ds, cfg.inducing);
      mle = fit_gp_mle(kind, ds, go);
    } catch (const std::exception&) {
      mle_error = std::current_exception();
    }
  }

  for (FitMethod m : cfg.methods) {
    FitRecord rec;
    rec.method = m;
    try {
      switch (m) {
        case FitMethod::Ls: {
          const auto r = fit_ls(kind, ds, default_init(kind, ds), lo);
          rec.json = to_json(r);
          rec.converged = r.converged;
          rec.beta = r.beta;
          break;
        }
        case FitMethod::Wls:
          if (!wls) std::rethrow_exception(wls_error);
          rec.json = to_json(*wls);
          rec.converged = wls->converged;
          rec.beta = wls->beta;
          break;
        case FitMethod::GpMle:
          if (!mle) std::rethrow_exception(mle_error);
          rec.json = to_json(*mle);
          rec.converged = mle->converged;
          rec.beta = mle->beta;
          rec.gp = mle;
          break;
        case FitMethod::GpMcmc: {
          SampleInit si;
          if (wls) si.prior_center = wls->beta;
          if (mle) {
            si.beta = mle->beta;
            si.hyper = mle->hyper;
          }
          auto s = run_sampling(ds, kind, cfg, derive_seed(seed, 1000), si);
          const Eigen::MatrixXd bd = s.pooled_beta();
          const Eigen::VectorXd pm = bd.colwise().mean().transpose();
          rec.beta = ParamVector(kind, pm);
          rec.converged = s.ok;
          rec.json = {{"model", std::string(model_name(kind))},
                      {"method", "gp-mcmc"},
                      {"params", to_json(*rec.beta)},
                      {"converged", s.ok},
                      {"mcmc", s.diagnostics}};
          if (!s.ok) rec.json["message"] = s.diagnostics.value("error", "");
          rec.mcmc_hyper.emplace(s.pooled("lengthscale"), s.pooled("variance"));
          rec.json["hyper"] = {{"lengthscale", mean(rec.mcmc_hyper->first)},
                               {"variance", mean(rec.mcmc_hyper->second)}};
          const std::string mname(model_name(kind));
          for (auto tr : {CurveTransform::Speed, CurveTransform::Flow}) {
            const auto env = posterior_curves(kind, bd, grid, tr, cfg.eti_levels, cfg.shift);
            const std::string fname = "envelope_" + mname +
                                      (tr == CurveTransform::Speed ? "_speed.csv" : "_flow.csv");
            out.files.push_back({fname, envelope_csv(env)});
            auto ej = to_json(env);
            ej["file"] = fname;
            rec.json["envelopes"].push_back(ej);
          }
          for (auto& f : s.files) {
            rec.json["chain_files"].push_back(f.name);
            out.files.push_back(std::move(f));
          }
          break;
        }
      }
      rec.json["status"] = rec.converged ? "ok" : "not_converged";
      const auto rmse = rmse_bins(ds, *rec.beta, cfg.bin_edges, cfg.shift);
      rec.json["rmse_bins"] = to_json(rmse);
      const std::string fname = "curve_" + stem(kind, m) + ".csv";
      out.files.push_back({fname, curve_csv(*rec.beta, grid, cfg.shift)});
      rec.json["curve_file"] = fname;
    } catch (const std::exception& e) {
      rec = FitRecord{};
      rec.method = m;
      rec.json = failure_json(kind, m, e);
    }
    out.fits.push_back(std::move(rec));
  }
  return out;
}

std::string rmse_csv(const nlohmann::json& fits) {
  std::string out = "model,method,bin_lower,bin_upper,count,rmse\n";
  for (const auto& f : fits) {
    if (!f.contains("rmse_bins")) continue;
    const auto& b = f.at("rmse_bins");
    const auto& edges = b.at("edges");
    for (std::size_t j = 0; j + 1 < edges.size(); ++j) {
      out += f.at("model").get<std::string>() + ',' + f.at("method").get<std::string>() + ',' +
             fmt(edges[j].get<double>()) + ',' + fmt(edges[j + 1].get<double>()) + ',' +
             std::to_string(b.at("counts")[j].get<std::size_t>()) + ',';
      if (!b.at("rmse")[j].is_null()) out += fmt(b.at("rmse")[j].get<double>());
      out += '\n';
    }
  }
  return out;
}

}  // namespace

CalibrationOutput run_calibration(const Dataset& ds, const RunConfig& cfg, const LoadStats* load_stats) {
  cfg.validate();
  if (ds.size() < 2) throw InvalidArgument("calibration needs at least two observations");
  const auto grid = default_grid(ds, cfg.grid_points);

  std::vector<ModelOutcome> outcomes(cfg.models.size());
  parallel_for(cfg.models.size(), cfg.threads, [&](std::size_t i) {
    const auto kind = cfg.models[i];
    outcomes[i] = run_model(ds, kind, cfg, model_seed(cfg.seed, kind), grid);
  });

  CalibrationOutput out;
  nlohmann::json fits = nlohmann::json::array();
  HyperTable table;
  bool all_ok = true;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    for (auto& rec : outcomes[i].fits) {
      all_ok = all_ok && rec.converged;
      if (rec.gp) table.add_mle(*rec.gp);
      if (rec.mcmc_hyper) table.add_mcmc(cfg.models[i], rec.mcmc_hyper->first, rec.mcmc_hyper->second);
      fits.push_back(std::move(rec.json));
    }
    for (auto& f : outcomes[i].files) out.files.push_back(std::move(f));
  }
  out.files.push_back({"rmse_bins.csv", rmse_csv(fits)});

  nlohmann::json& r = out.report;
  r["schema_version"] = kSchemaVersion;
  r["config"] = to_json(cfg);
  r["dataset"] = dataset_summary(ds, load_stats);
  r["fits"] = std::move(fits);
  r["hyper_table"] = table.to_json();
  r["all_converged"] = all_ok;
  std::vector<std::string> names;
  for (const auto& f : out.files) names.push_back(f.name);
  r["files"] = names;
  out.all_converged = all_ok;
  return out;
}

void write_files(const std::vector<OutputFile>& files, const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir + "': " + ec.message());
  for (const auto& f : files) {
    const auto path = std::filesystem::path(dir) / f.name;
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write '" + path.string() + "'");
    os << f.content;
    if (!os) throw IoError("failed writing '" + path.string() + "'");
  }
}

void write_outputs(const CalibrationOutput& out, const std::string& dir) {
  std::vector<OutputFile> files = out.files;
  files.push_back({"report.json", out.report.dump(2) + "\n"});
  write_files(files, dir);
}

}  // namespace fdcal

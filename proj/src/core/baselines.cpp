#include "baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "error.hpp"

namespace fdcal {

std::string_view method_name(FitMethod m) {
  switch (m) {
    case FitMethod::Ls: return "ls";
    case FitMethod::Wls: return "wls";
    case FitMethod::GpMle: return "gp-mle";
    case FitMethod::GpMcmc: return "gp-mcmc";
  }
  return "unknown";
}

FitMethod parse_method(std::string_view name) {
  for (auto m : {FitMethod::Ls, FitMethod::Wls, FitMethod::GpMle, FitMethod::GpMcmc}) {
    if (name == method_name(m)) return m;
  }
  throw InvalidArgument("unknown method '" + std::string(name) + "'");
}

Eigen::VectorXd wls_raw_weights(const Dataset& ds) {
  const auto n = static_cast<Eigen::Index>(ds.size());
  if (n < 2) throw InvalidArgument("WLS weights need at least 2 observations");
  const auto& k = ds.densities();
  Eigen::VectorXd w(n);
  w[0] = k[1] - k[0];
  w[n - 1] = k[n - 1] - k[n - 2];
  for (Eigen::Index i = 1; i + 1 < n; ++i) w[i] = 0.5 * (k[i + 1] - k[i - 1]);
  return w;
}

Eigen::VectorXd wls_weights(const Dataset& ds) {
  Eigen::VectorXd w = wls_raw_weights(ds);
  const double total = w.sum();
  if (!(total > 0.0)) throw InvalidArgument("WLS weights are all zero: densities are all duplicates");
  return w * (static_cast<double>(w.size()) / total);
}

double weighted_sse(FdModelKind kind, const Dataset& ds, const Eigen::VectorXd& weights,
                    const Eigen::VectorXd& log_beta, Eigen::VectorXd* grad, GreenbergShift shift) {
  const Eigen::VectorXd beta = log_beta.array().exp();
  if (!beta.allFinite()) return std::numeric_limits<double>::infinity();
  const auto& k = ds.densities();
  const auto& v = ds.speeds();
  double sse = 0.0;
  Eigen::VectorXd g(beta.size());
  if (grad) grad->setZero(beta.size());
  for (Eigen::Index i = 0; i < k.size(); ++i) {
    const double m = grad ? evaluate_with_gradient(kind, beta, k[i], g, shift)
                          : evaluate(kind, beta, k[i], shift);
    const double r = v[i] - m;
    sse += weights[i] * r * r;
    if (grad) *grad -= 2.0 * weights[i] * r * g;
  }
  if (grad) *grad = grad->cwiseProduct(beta);
  return sse;
}

FitResult fit_weighted(FdModelKind kind, const Dataset& ds, const ParamVector& init,
                       const Eigen::VectorXd& weights, const LsOptions& options) {
  if (init.kind() != kind) throw InvalidArgument("initial parameters belong to another model");
  if (ds.size() < param_count(kind)) {
    throw InvalidArgument("need at least " + std::to_string(param_count(kind)) +
                          " observations to fit " + std::string(model_name(kind)));
  }
  if (static_cast<std::size_t>(weights.size()) != ds.size()) {
    throw InvalidArgument("weight vector does not match the dataset");
  }

  const Objective objective = [&](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
    return weighted_sse(kind, ds, weights, x, g, options.shift);
  };

  std::vector<Eigen::VectorXd> starts{init.values().array().log().matrix()};
  const bool multi =
      options.multi_start.value_or(kind == FdModelKind::Newell || kind == FdModelKind::ThreePL);
  if (multi) {
    std::mt19937_64 rng(options.seed);
    std::uniform_real_distribution<double> jitter(-options.spread, options.spread);
    for (int s = 0; s < options.extra_starts; ++s) {
      Eigen::VectorXd x = starts.front();
      for (auto& xi : x) xi += jitter(rng);
      starts.push_back(std::move(x));
    }
  }

  std::optional<OptimResult> best;
  std::string last_error;
  for (const auto& x0 : starts) {
    try {
      auto r = minimize_bfgs(objective, x0, options.optim);
      if (!best || r.f < best->f) best = std::move(r);
    } catch (const NumericalError& e) {
      last_error = e.what();
    }
  }
  if (!best) throw NumericalError("least-squares objective not finite at any start: " + last_error);
  if (!best->x.allFinite()) throw NumericalError("least-squares iterate diverged");

  FitResult out;
  out.kind = kind;
  out.beta = ParamVector(kind, best->x.array().exp().matrix());
  out.objective = best->f;
  out.converged = best->converged;
  out.iterations = best->iterations;
  out.message = best->message;
  return out;
}

FitResult fit_ls(FdModelKind kind, const Dataset& ds, const ParamVector& init,
                 const LsOptions& options) {
  auto r = fit_weighted(kind, ds, init, Eigen::VectorXd::Ones(static_cast<Eigen::Index>(ds.size())),
                        options);
  r.method = FitMethod::Ls;
  return r;
}

FitResult fit_wls(FdModelKind kind, const Dataset& ds, const ParamVector& init,
                  const LsOptions& options) {
  if (ds.size() < param_count(kind) + 1) {
    throw InvalidArgument("WLS needs at least " + std::to_string(param_count(kind) + 1) +
                          " observations");
  }
  auto r = fit_weighted(kind, ds, init, wls_weights(ds), options);
  r.method = FitMethod::Wls;
  return r;
}

nlohmann::json to_json(const FitResult& r) {
  return {{"model", std::string(model_name(r.kind))},
          {"method", std::string(method_name(r.method))},
          {"params", to_json(r.beta)},
          {"objective", r.objective},
          {"converged", r.converged},
          {"iterations", r.iterations},
          {"message", r.message}};
}

}  // namespace fdcal

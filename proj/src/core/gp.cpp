#include "gp.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "baselines.hpp"
#include "error.hpp"
#include "linalg.hpp"

namespace fdcal {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

struct Unpacked {
  Eigen::VectorXd beta;
  double lengthscale;
  double variance;
  double noise_var;
};

Unpacked unpack(FdModelKind kind, const Eigen::VectorXd& x) {
  const auto p = static_cast<Eigen::Index>(param_count(kind));
  if (x.size() != p + 3) throw InvalidArgument("packed GP vector has the wrong length");
  return {x.head(p).array().exp().matrix(), std::exp(x[p]), std::exp(x[p + 1]),
          std::exp(x[p + 2])};
}

double dense_impl(FdModelKind kind, const Dataset& ds, const Unpacked& u, GreenbergShift shift,
                  Eigen::VectorXd* grad) {
  const auto n = static_cast<Eigen::Index>(ds.size());
  if (n > kDenseLimit) throw InvalidArgument("dense GP path limited to n <= 2000; use inducing points");
  const SeKernel ker(u.variance, u.lengthscale);
  const auto& k = ds.densities();
  const Eigen::VectorXd m = evaluate_all(kind, u.beta, k, shift);
  const Eigen::VectorXd r = ds.speeds() - m;
  Eigen::MatrixXd kmat = ker.cross_cov(k, k);
  Eigen::MatrixXd sigma = kmat;
  sigma.diagonal().array() += u.noise_var;
  const auto chol = chol_jitter(sigma);
  const Eigen::VectorXd alpha = chol_solve(chol.lower, r);
  const double nll = 0.5 * r.dot(alpha) + 0.5 * chol.log_det() + 0.5 * static_cast<double>(n) * kLog2Pi;
  if (grad) {
    const Eigen::MatrixXd jac = jacobian_all(kind, u.beta, k, shift);
    const auto p = jac.cols();
    grad->resize(p + 3);
    grad->head(p) = -(jac.transpose() * alpha).cwiseProduct(u.beta);
    Eigen::MatrixXd a = chol_solve(chol.lower, Eigen::MatrixXd::Identity(n, n));
    a -= alpha * alpha.transpose();
    (*grad)[p] = 0.5 * a.cwiseProduct(ker.cross_cov_dlog_lengthscale(k, k)).sum();
    (*grad)[p + 1] = 0.5 * a.cwiseProduct(kmat).sum();
    (*grad)[p + 2] = 0.5 * u.noise_var * a.trace();
  }
  return nll;
}

double sparse_impl(FdModelKind kind, const Dataset& ds, const InducingSet& inducing,
                   const Unpacked& u, GreenbergShift shift, Eigen::VectorXd* grad) {
  const auto n = static_cast<Eigen::Index>(ds.size());
  const SeKernel ker(u.variance, u.lengthscale);
  const auto& k = ds.densities();
  const auto& z = inducing.locations();
  const Eigen::VectorXd m = evaluate_all(kind, u.beta, k, shift);
  const Eigen::VectorXd r = ds.speeds() - m;

  Eigen::MatrixXd k_un, dk_un;
  if (grad) {
    ker.cross_cov_with_dlog(z, k, k_un, dk_un);
  } else {
    k_un = ker.cross_cov(z, k);
  }
  LowRankSystem sys{k_un.transpose(), inducing_cov(ker, z), u.noise_var};
  const LowRankFactor fac(sys);
  const Eigen::VectorXd alpha = fac.solve(r);
  const double nll = 0.5 * r.dot(alpha) + 0.5 * fac.log_det() + 0.5 * static_cast<double>(n) * kLog2Pi;
  if (!grad) return nll;

  const Eigen::MatrixXd jac = jacobian_all(kind, u.beta, k, shift);
  const auto p = jac.cols();
  const auto nu = static_cast<double>(z.size());
  const double s = u.noise_var;
  const auto& v = fac.projection();       // L^{-1} K_un
  const auto& l = fac.inducing_lower();
  const auto& lb = fac.inner_lower();
  const Eigen::MatrixXd b_inv = chol_solve(lb, Eigen::MatrixXd::Identity(z.size(), z.size()));
  const double tr_b_inv = b_inv.trace();
  const Eigen::VectorXd v_alpha = v * alpha;

  grad->resize(p + 3);
  grad->head(p) = -(jac.transpose() * alpha).cwiseProduct(u.beta);

  const Eigen::MatrixXd dv = projection_dlog_lengthscale(ker, z, k, l, v, &dk_un);
  const Eigen::MatrixXd b_inv_v = b_inv * v;
  (*grad)[p] = -(dv * alpha).dot(v_alpha) + dv.cwiseProduct(b_inv_v).sum() / s;

  (*grad)[p + 1] = -0.5 * v_alpha.squaredNorm() + 0.5 * (nu - tr_b_inv);
  (*grad)[p + 2] = -0.5 * s * alpha.squaredNorm() + 0.5 * (static_cast<double>(n) - (nu - tr_b_inv));
  return nll;
}

void check_hyper(const GpHyper& hyper) {
  if (!std::isfinite(hyper.noise_var) || hyper.noise_var <= 0.0) {
    throw InvalidArgument("noise variance must be finite and positive");
  }
}

Eigen::VectorXd pack(const ParamVector& beta, const GpHyper& hyper) {
  const auto p = static_cast<Eigen::Index>(beta.size());
  Eigen::VectorXd x(p + 3);
  x.head(p) = beta.values().array().log();
  x[p] = std::log(hyper.kernel.lengthscale());
  x[p + 1] = std::log(hyper.kernel.variance());
  x[p + 2] = std::log(hyper.noise_var);
  return x;
}

}  // namespace

Eigen::MatrixXd inducing_cov(const SeKernel& ker, const Eigen::VectorXd& z) {
  Eigen::MatrixXd kuu = ker.cross_cov(z, z);
  kuu.diagonal().array() += kInducingNugget * ker.variance();
  return kuu;
}

Eigen::MatrixXd projection_dlog_lengthscale(const SeKernel& ker, const Eigen::VectorXd& z,
                                            const Eigen::VectorXd& k, const Eigen::MatrixXd& lower,
                                            const Eigen::MatrixXd& v, const Eigen::MatrixXd* dk_un) {
  const auto lt = lower.triangularView<Eigen::Lower>();
  const Eigen::MatrixXd tmp = lt.solve(ker.cross_cov_dlog_lengthscale(z, z));
  const Eigen::MatrixXd p = lt.solve(tmp.transpose());
  Eigen::MatrixXd phi = p.triangularView<Eigen::StrictlyLower>();
  phi.diagonal() = 0.5 * p.diagonal();
  if (dk_un) return lt.solve(*dk_un) - phi * v;
  return lt.solve(ker.cross_cov_dlog_lengthscale(z, k)) - phi * v;
}

InducingSet::InducingSet(Eigen::VectorXd locations) : locations_(std::move(locations)) {
  if (locations_.size() == 0) throw InvalidArgument("inducing set is empty");
  if (!locations_.allFinite()) throw InvalidArgument("inducing locations must be finite");
  for (Eigen::Index i = 1; i < locations_.size(); ++i) {
    if (!(locations_[i] > locations_[i - 1])) {
      throw InvalidArgument("inducing locations must be strictly ascending");
    }
  }
}

InducingSet default_inducing(const Dataset& ds, std::size_t u) {
  if (ds.size() < 2) throw InvalidArgument("default_inducing needs at least 2 observations");
  if (u < 2) throw InvalidArgument("default_inducing needs u >= 2");
  const double lo = ds.min_density();
  const double hi = ds.max_density();
  if (!(hi > lo)) throw InvalidArgument("degenerate density range");
  Eigen::VectorXd z = Eigen::VectorXd::LinSpaced(static_cast<Eigen::Index>(u), lo, hi);
  z[0] = lo;
  z[z.size() - 1] = hi;
  return InducingSet(std::move(z));
}

double nll_dense(FdModelKind kind, const ParamVector& beta, const GpHyper& hyper,
                 const Dataset& ds, GreenbergShift shift) {
  check_hyper(hyper);
  return dense_impl(kind, ds,
                    {beta.values(), hyper.kernel.lengthscale(), hyper.kernel.variance(), hyper.noise_var},
                    shift, nullptr);
}

double nll_sparse(FdModelKind kind, const ParamVector& beta, const GpHyper& hyper,
                  const InducingSet& inducing, const Dataset& ds, GreenbergShift shift) {
  check_hyper(hyper);
  return sparse_impl(kind, ds, inducing,
                     {beta.values(), hyper.kernel.lengthscale(), hyper.kernel.variance(), hyper.noise_var},
                     shift, nullptr);
}

double gp_nll_packed(FdModelKind kind, const Dataset& ds, const InducingSet* inducing,
                     const Eigen::VectorXd& x, Eigen::VectorXd* grad, GreenbergShift shift) {
  const auto u = unpack(kind, x);
  return inducing ? sparse_impl(kind, ds, *inducing, u, shift, grad)
                  : dense_impl(kind, ds, u, shift, grad);
}

GpFit fit_gp_mle(FdModelKind kind, const Dataset& ds, const GpMleOptions& options) {
  const auto p = static_cast<Eigen::Index>(param_count(kind));
  if (ds.size() < param_count(kind) + 3) {
    throw InvalidArgument("GP fit needs at least " + std::to_string(param_count(kind) + 3) +
                          " observations");
  }
  const double kmin = ds.min_density();
  const double kmax = ds.max_density();
  const double range = kmax - kmin;
  if (!(range > 0.0)) throw InvalidArgument("degenerate dataset: all densities are equal");
  const double var_v = ds.speed_variance();
  if (!(var_v > 0.0)) throw InvalidArgument("degenerate dataset: all speeds are equal");
  if (options.inducing) {
    const auto& z = options.inducing->locations();
    const double tol = 1e-9 * std::max(1.0, range);
    if (z[0] < kmin - tol || z[z.size() - 1] > kmax + tol) {
      throw InvalidArgument("inducing locations must lie within the observed density range");
    }
  } else if (static_cast<Eigen::Index>(ds.size()) > kDenseLimit) {
    throw InvalidArgument("dense GP path limited to n <= 2000; use inducing points");
  }

  ParamVector beta0;
  if (options.init) {
    beta0 = *options.init;
  } else {
    beta0 = default_init(kind, ds);
    try {
      LsOptions ls;
      ls.shift = options.shift;
      beta0 = fit_wls(kind, ds, beta0, ls).beta;
    } catch (const Error&) {
      // keep default_init
    }
  }

  const GpHyper hyper0{SeKernel(options.fixed_variance.value_or(var_v / 2.0),
                                options.fixed_lengthscale.value_or(range / 10.0)),
                       options.fixed_noise_var.value_or(var_v / 2.0)};
  const Eigen::VectorXd full0 = pack(beta0, hyper0);

  // free coordinates and the log-space box for each free hyperparameter
  std::vector<Eigen::Index> free;
  std::vector<std::pair<double, double>> box;
  for (Eigen::Index i = 0; i < p; ++i) {
    free.push_back(i);
    box.emplace_back(-std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity());
  }
  const std::pair<double, double> var_box{std::log(1e-8 * var_v), std::log(10.0 * var_v)};
  if (!options.fixed_lengthscale) {
    free.push_back(p);
    box.emplace_back(std::log(1e-2), std::log(range));
  }
  if (!options.fixed_variance) {
    free.push_back(p + 1);
    box.push_back(var_box);
  }
  if (!options.fixed_noise_var) {
    free.push_back(p + 2);
    box.push_back(var_box);
  }

  const InducingSet* ind = options.inducing ? &*options.inducing : nullptr;
  const auto nf = static_cast<Eigen::Index>(free.size());
  auto expand = [&](const Eigen::VectorXd& xf) {
    Eigen::VectorXd full = full0;
    for (Eigen::Index i = 0; i < nf; ++i) full[free[static_cast<std::size_t>(i)]] = xf[i];
    return full;
  };

  auto penalized = [&](const Eigen::VectorXd& xf, Eigen::VectorXd* gf) -> double {
    double barrier = 0.0;
    for (Eigen::Index i = 0; i < nf; ++i) {
      const auto [lo, hi] = box[static_cast<std::size_t>(i)];
      if (std::isinf(lo)) continue;
      if (!(xf[i] > lo && xf[i] < hi)) return std::numeric_limits<double>::infinity();
      barrier -= options.barrier_weight * (std::log(xf[i] - lo) + std::log(hi - xf[i]));
    }
    const Eigen::VectorXd full = expand(xf);
    Eigen::VectorXd gfull;
    const double nll = gp_nll_packed(kind, ds, ind, full, gf ? &gfull : nullptr, options.shift);
    if (gf) {
      gf->resize(nf);
      for (Eigen::Index i = 0; i < nf; ++i) {
        (*gf)[i] = gfull[free[static_cast<std::size_t>(i)]];
        const auto [lo, hi] = box[static_cast<std::size_t>(i)];
        if (!std::isinf(lo)) {
          (*gf)[i] += options.barrier_weight * (-1.0 / (xf[i] - lo) + 1.0 / (hi - xf[i]));
        }
      }
    }
    return nll + barrier;
  };

  bool first_call = true;
  const Objective objective = [&](const Eigen::VectorXd& xf, Eigen::VectorXd* gf) -> double {
    try {
      if (!options.finite_difference_gradient || !gf) {
        first_call = false;
        return penalized(xf, gf);
      }
      const double f = penalized(xf, nullptr);
      gf->resize(nf);
      for (Eigen::Index i = 0; i < nf; ++i) {
        const double h = 1e-6 * std::max(1.0, std::abs(xf[i]));
        Eigen::VectorXd xp = xf, xm = xf;
        xp[i] += h;
        xm[i] -= h;
        (*gf)[i] = (penalized(xp, nullptr) - penalized(xm, nullptr)) / (2.0 * h);
      }
      first_call = false;
      return f;
    } catch (const NumericalError&) {
      if (first_call) throw;
      return std::numeric_limits<double>::infinity();
    }
  };

  Eigen::VectorXd x0(nf);
  for (Eigen::Index i = 0; i < nf; ++i) x0[i] = full0[free[static_cast<std::size_t>(i)]];
  const auto opt = minimize_bfgs(objective, x0, options.optim);
  const Eigen::VectorXd full = expand(opt.x);
  const auto u = unpack(kind, full);

  GpFit fit;
  fit.kind = kind;
  fit.beta = ParamVector(kind, u.beta);
  fit.hyper = GpHyper{SeKernel(u.variance, u.lengthscale), u.noise_var};
  fit.inducing = options.inducing;
  fit.shift = options.shift;
  fit.nll = gp_nll_packed(kind, ds, ind, full, nullptr, options.shift);
  fit.converged = opt.converged;
  fit.iterations = opt.iterations;
  fit.message = opt.message;
  return fit;
}

Prediction predict_f(const GpFit& fit, const Dataset& ds, const Eigen::VectorXd& query) {
  const auto& ker = fit.hyper.kernel;
  const auto& k = ds.densities();
  const Eigen::VectorXd r = ds.speeds() - evaluate_all(fit.kind, fit.beta.values(), k, fit.shift);
  const Eigen::VectorXd m_star = evaluate_all(fit.kind, fit.beta.values(), query, fit.shift);
  Prediction out;
  out.variance.resize(query.size());
  if (fit.inducing) {
    const auto& z = fit.inducing->locations();
    LowRankSystem sys{ker.cross_cov(k, z), inducing_cov(ker, z), fit.hyper.noise_var};
    const LowRankFactor fac(sys);
    const auto lt = fac.inducing_lower().triangularView<Eigen::Lower>();
    const Eigen::MatrixXd v_star = lt.solve(ker.cross_cov(z, query));
    const Eigen::VectorXd w = chol_solve(fac.inner_lower(), fac.projection() * r);
    out.mean = m_star + v_star.transpose() * w / fit.hyper.noise_var;
    const Eigen::MatrixXd lb_v = fac.inner_lower().triangularView<Eigen::Lower>().solve(v_star);
    out.variance = (ker.variance() - v_star.colwise().squaredNorm().array() +
                    lb_v.colwise().squaredNorm().array()).matrix();
  } else {
    Eigen::MatrixXd sigma = ker.cross_cov(k, k);
    sigma.diagonal().array() += fit.hyper.noise_var;
    const auto chol = chol_jitter(sigma);
    const Eigen::MatrixXd k_nq = ker.cross_cov(k, query);
    out.mean = m_star + k_nq.transpose() * chol_solve(chol.lower, r);
    const Eigen::MatrixXd a = chol.lower.triangularView<Eigen::Lower>().solve(k_nq);
    out.variance = (ker.variance() - a.colwise().squaredNorm().array()).matrix();
  }
  out.variance = out.variance.cwiseMax(0.0);
  return out;
}

nlohmann::json to_json(const GpFit& fit) {
  nlohmann::json j;
  j["model"] = std::string(model_name(fit.kind));
  j["method"] = "gp-mle";
  j["params"] = to_json(fit.beta);
  j["hyper"] = {{"lengthscale", fit.hyper.kernel.lengthscale()},
                {"variance", fit.hyper.kernel.variance()},
                {"noise_var", fit.hyper.noise_var}};
  if (fit.inducing) {
    const auto& z = fit.inducing->locations();
    j["inducing"] = std::vector<double>(z.data(), z.data() + z.size());
  } else {
    j["inducing"] = "dense";
  }
  j["k_s"] = fit.shift.k_s;
  j["nll"] = fit.nll;
  j["objective"] = fit.nll;
  j["converged"] = fit.converged;
  j["iterations"] = fit.iterations;
  j["message"] = fit.message;
  return j;
}

}  // namespace fdcal

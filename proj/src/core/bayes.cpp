#include "bayes.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include <boost/math/special_functions/digamma.hpp>

#include "error.hpp"
#include "linalg.hpp"

namespace fdcal {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Per-observation expected log-likelihood and its partials.
struct PointTerms {
  double value = 0.0;
  double d_mu = 0.0;
  double d_s = 0.0;
  double d_noise_a = 0.0;  // w.r.t. log variance (Gaussian) or log scale (Student-t)
  double d_noise_b = 0.0;  // w.r.t. dof on the natural scale (Student-t)
};

PointTerms gaussian_closed(double y, double mu, double s, double var) {
  const double r = y - mu;
  PointTerms t;
  t.value = -0.5 * (kLog2Pi + std::log(var)) - (r * r + s) / (2.0 * var);
  t.d_mu = r / var;
  t.d_s = -0.5 / var;
  t.d_noise_a = -0.5 + (r * r + s) / (2.0 * var);
  return t;
}

// E[h], E[h'], E[h''] / 2 and E[dh/dlog var] by quadrature; d/ds E[h] = E[h''] / 2.
PointTerms gaussian_quadrature(const GaussHermite& gh, double y, double mu, double s, double var) {
  PointTerms t;
  const double c = std::sqrt(2.0 * std::max(s, 0.0));
  for (Eigen::Index j = 0; j < gh.nodes.size(); ++j) {
    const double w = gh.weights[j] * GaussHermite::kInvSqrtPi;
    const double r = y - (mu + c * gh.nodes[j]);
    t.value += w * (-0.5 * (kLog2Pi + std::log(var)) - r * r / (2.0 * var));
    t.d_mu += w * r / var;
    t.d_s += w * (-0.5 / var);
    t.d_noise_a += w * (-0.5 + r * r / (2.0 * var));
  }
  return t;
}

// Sums over all observations at once; columns of the work arrays are quadrature nodes.
struct DataTerms {
  double value = 0.0;
  Eigen::VectorXd d_mu;
  Eigen::VectorXd d_s;
  double d_noise_a = 0.0;
  double d_noise_b = 0.0;
};

DataTerms student_t_quadrature(const GaussHermite& gh, const Eigen::VectorXd& y,
                               const Eigen::VectorXd& mu, const Eigen::VectorXd& s, double scale,
                               double dof, double log_norm, double dof_const) {
  const auto n = y.size();
  const auto g = gh.nodes.size();
  const Eigen::VectorXd w = gh.weights * GaussHermite::kInvSqrtPi;
  const Eigen::ArrayXd c = (2.0 * s.array().max(0.0)).sqrt();
  const Eigen::ArrayXXd z =
      ((y - mu).array().replicate(1, g) - c.replicate(1, g) * gh.nodes.transpose().array().replicate(n, 1)) /
      scale;
  const Eigen::ArrayXXd z2 = z.square();
  const Eigen::ArrayXXd q = dof + z2;
  const Eigen::VectorXd e_log1p = (z2 / dof).log1p().matrix() * w;
  const Eigen::VectorXd e_zq = (z / q).matrix() * w;
  const Eigen::VectorXd e_d2 = ((dof - z2) / q.square()).matrix() * w;
  const Eigen::VectorXd e_z2q = (z2 / q).matrix() * w;

  DataTerms t;
  t.value = static_cast<double>(n) * log_norm - 0.5 * (dof + 1.0) * e_log1p.sum();
  t.d_mu = ((dof + 1.0) / scale) * e_zq;
  t.d_s = (-0.5 * (dof + 1.0) / (scale * scale)) * e_d2;
  t.d_noise_a = -static_cast<double>(n) + (dof + 1.0) * e_z2q.sum();
  t.d_noise_b = static_cast<double>(n) * dof_const - 0.5 * e_log1p.sum() +
                (dof + 1.0) / (2.0 * dof) * e_z2q.sum();
  return t;
}

// d/dt [log HalfCauchy(e^t) + t]
double half_cauchy_dlog(double x, double scale) {
  const double r = x / scale;
  return -2.0 * r * r / (1.0 + r * r) + 1.0;
}

}  // namespace

PriorSpec PriorSpec::centered_on(const ParamVector& wls) {
  PriorSpec p;
  for (std::size_t i = 0; i < wls.size(); ++i) {
    p.beta.push_back({wls[i], std::max(wls[i] / 6.0, 10.0)});
  }
  return p;
}

double half_cauchy_log_pdf(double x, double scale) {
  if (x < 0.0) return kNegInf;
  const double r = x / scale;
  return std::log(2.0 / (std::numbers::pi * scale)) - std::log1p(r * r);
}

WhitenedSparseGp::WhitenedSparseGp(FdModelKind kind, Dataset ds, InducingSet inducing,
                                   PriorSpec priors, NoiseModel noise, BayesOptions options)
    : kind_(kind),
      ds_(std::move(ds)),
      inducing_(std::move(inducing)),
      priors_(std::move(priors)),
      noise_(noise),
      options_(std::move(options)),
      gh_(options_.gh_order) {
  u_ = static_cast<Eigen::Index>(inducing_.size());
  p_ = static_cast<Eigen::Index>(param_count(kind));
  if (priors_.beta.size() != static_cast<std::size_t>(p_)) {
    throw InvalidArgument("prior spec does not match the model's parameter count");
  }
  for (const auto& b : priors_.beta) {
    if (!(b.sd > 0.0)) throw InvalidArgument("prior standard deviations must be positive");
  }
  if (!(priors_.half_cauchy_scale > 0.0)) throw InvalidArgument("Half-Cauchy scale must be positive");
  if (options_.fixed_beta && options_.fixed_beta->kind() != kind) {
    throw InvalidArgument("fixed parameters belong to another model");
  }
  if (noise_.kind == NoiseKind::Gaussian && !(noise_.variance > 0.0)) {
    throw InvalidArgument("Gaussian noise variance must be positive");
  }
  if (noise_.kind == NoiseKind::StudentT && !(noise_.scale > 0.0 && noise_.dof >= 1.0)) {
    throw InvalidArgument("Student-t noise needs scale > 0 and dof >= 1");
  }
  beta_free_ = !options_.fixed_beta;
  ell_free_ = !options_.fixed_lengthscale;
  var_free_ = !options_.fixed_variance;
  noise_free_ = !options_.fixed_noise;
  dim_ = u_ + (beta_free_ ? p_ : 0) + (ell_free_ ? 1 : 0) + (var_free_ ? 1 : 0) +
         (noise_free_ ? (noise_.kind == NoiseKind::Gaussian ? 1 : 2) : 0);

  if (!ell_free_ && !var_free_) {
    const SeKernel ker(*options_.fixed_variance, *options_.fixed_lengthscale);
    const auto chol = chol_jitter(inducing_cov(ker, inducing_.locations()));
    fixed_l_ = chol.lower;
    fixed_v_ = chol.lower.triangularView<Eigen::Lower>().solve(
        ker.cross_cov(inducing_.locations(), ds_.densities()));
  }
}

WhitenedSparseGp::Theta WhitenedSparseGp::theta(const Eigen::VectorXd& x) const {
  if (x.size() != dim_) throw InvalidArgument("state vector has the wrong dimension");
  Theta t;
  Eigen::Index at = u_;
  if (beta_free_) {
    t.beta = x.segment(at, p_).array().exp();
    at += p_;
  } else {
    t.beta = options_.fixed_beta->values();
  }
  t.lengthscale = ell_free_ ? std::exp(x[at++]) : *options_.fixed_lengthscale;
  t.variance = var_free_ ? std::exp(x[at++]) : *options_.fixed_variance;
  t.noise = noise_;
  if (noise_free_) {
    if (noise_.kind == NoiseKind::Gaussian) {
      t.noise.variance = std::exp(x[at++]);
    } else {
      t.noise.scale = std::exp(x[at++]);
      t.noise.dof = 1.0 + std::exp(x[at++]);
    }
  }
  return t;
}

double WhitenedSparseGp::evaluate(const Eigen::VectorXd& x, Eigen::VectorXd* grad,
                                  bool data_only) const {
  const Theta th = theta(x);
  if (!th.beta.allFinite() || !std::isfinite(th.lengthscale) || !std::isfinite(th.variance) ||
      th.lengthscale <= 0.0 || th.variance <= 0.0) {
    return kNegInf;
  }
  const auto& k = ds_.densities();
  const auto& y = ds_.speeds();
  const auto& z = inducing_.locations();
  const auto n = k.size();
  const Eigen::VectorXd nu = x.head(u_);
  const SeKernel ker(th.variance, th.lengthscale);

  Eigen::MatrixXd l_own, v_own, dk_un;
  const bool want_dv = grad && ell_free_ && !data_only;
  if (!fixed_v_) {
    const auto chol = chol_jitter(inducing_cov(ker, z));
    l_own = chol.lower;
    Eigen::MatrixXd k_un;
    if (want_dv) {
      ker.cross_cov_with_dlog(z, k, k_un, dk_un);
    } else {
      k_un = ker.cross_cov(z, k);
    }
    v_own = l_own.triangularView<Eigen::Lower>().solve(k_un);
  }
  const Eigen::MatrixXd& l = fixed_l_ ? *fixed_l_ : l_own;
  const Eigen::MatrixXd& v = fixed_v_ ? *fixed_v_ : v_own;

  const bool want_jac = grad && beta_free_ && !data_only;
  Eigen::MatrixXd jac;
  const Eigen::VectorXd m = evaluate_all(kind_, th.beta, k, options_.shift);
  if (want_jac) jac = jacobian_all(kind_, th.beta, k, options_.shift);
  const Eigen::VectorXd mu = m + v.transpose() * nu;
  const Eigen::VectorXd s = (th.variance - v.colwise().squaredNorm().array()).matrix();

  Eigen::VectorXd g_mu(n), g_s(n);
  double ell = 0.0, g_na = 0.0, g_nb = 0.0;
  const auto& nz = th.noise;
  double log_norm = 0.0, dof_const = 0.0;
  if (nz.kind == NoiseKind::StudentT) {
    log_norm = std::lgamma(0.5 * (nz.dof + 1.0)) - std::lgamma(0.5 * nz.dof) -
               0.5 * std::log(nz.dof * std::numbers::pi) - std::log(nz.scale);
    dof_const = 0.5 * boost::math::digamma(0.5 * (nz.dof + 1.0)) -
                0.5 * boost::math::digamma(0.5 * nz.dof) - 0.5 / nz.dof;
  }
  if (nz.kind == NoiseKind::Gaussian) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const PointTerms t = options_.gaussian_by_quadrature
                               ? gaussian_quadrature(gh_, y[i], mu[i], s[i], nz.variance)
                               : gaussian_closed(y[i], mu[i], s[i], nz.variance);
      ell += t.value;
      g_mu[i] = t.d_mu;
      g_s[i] = t.d_s;
      g_na += t.d_noise_a;
    }
  } else {
    DataTerms t = student_t_quadrature(gh_, y, mu, s, nz.scale, nz.dof, log_norm, dof_const);
    ell = t.value;
    g_mu = std::move(t.d_mu);
    g_s = std::move(t.d_s);
    g_na = t.d_noise_a;
    g_nb = t.d_noise_b;
  }
  if (!std::isfinite(ell)) return kNegInf;
  if (data_only) return ell;

  const double hc = priors_.half_cauchy_scale;
  double lp = ell - 0.5 * nu.squaredNorm();
  if (beta_free_) {
    for (Eigen::Index j = 0; j < p_; ++j) {
      const auto& pr = priors_.beta[static_cast<std::size_t>(j)];
      const double d = (th.beta[j] - pr.mean) / pr.sd;
      lp += -0.5 * d * d - std::log(pr.sd) - 0.5 * kLog2Pi + std::log(th.beta[j]);
    }
  }
  if (ell_free_) lp += half_cauchy_log_pdf(th.lengthscale, hc) + std::log(th.lengthscale);
  if (var_free_) lp += half_cauchy_log_pdf(th.variance, hc) + std::log(th.variance);
  if (noise_free_) {
    if (nz.kind == NoiseKind::Gaussian) {
      lp += half_cauchy_log_pdf(nz.variance, hc) + std::log(nz.variance);
    } else {
      lp += half_cauchy_log_pdf(nz.scale, hc) + std::log(nz.scale);
      lp += half_cauchy_log_pdf(nz.dof, hc) + std::log(nz.dof - 1.0);
    }
  }
  if (!std::isfinite(lp)) return kNegInf;
  if (!grad) return lp;

  grad->resize(dim_);
  grad->head(u_) = v * g_mu - nu;
  Eigen::Index at = u_;
  if (beta_free_) {
    for (Eigen::Index j = 0; j < p_; ++j) {
      const auto& pr = priors_.beta[static_cast<std::size_t>(j)];
      const double b = th.beta[j];
      (*grad)[at + j] = jac.col(j).dot(g_mu) * b - (b - pr.mean) / (pr.sd * pr.sd) * b + 1.0;
    }
    at += p_;
  }
  if (ell_free_) {
    const Eigen::MatrixXd dv =
        projection_dlog_lengthscale(ker, z, k, l, v, dk_un.size() ? &dk_un : nullptr);
    const Eigen::VectorXd dmu = dv.transpose() * nu;
    const Eigen::VectorXd ds = -2.0 * v.cwiseProduct(dv).colwise().sum().transpose();
    (*grad)[at++] = g_mu.dot(dmu) + g_s.dot(ds) + half_cauchy_dlog(th.lengthscale, hc);
  }
  if (var_free_) {
    const Eigen::VectorXd dmu = 0.5 * (v.transpose() * nu);
    (*grad)[at++] = g_mu.dot(dmu) + g_s.dot(s) + half_cauchy_dlog(th.variance, hc);
  }
  if (noise_free_) {
    if (nz.kind == NoiseKind::Gaussian) {
      (*grad)[at++] = g_na + half_cauchy_dlog(nz.variance, hc);
    } else {
      (*grad)[at++] = g_na + half_cauchy_dlog(nz.scale, hc);
      const double e = nz.dof - 1.0;  // d dof / dt
      const double r = nz.dof / hc;
      (*grad)[at++] = g_nb * e - 2.0 * r / (hc * (1.0 + r * r)) * e + 1.0;
    }
  }
  return lp;
}

double WhitenedSparseGp::log_q(const Eigen::VectorXd& x) const {
  try {
    return evaluate(x, nullptr, false);
  } catch (const NumericalError&) {
    return kNegInf;
  } catch (const DomainError&) {
    return kNegInf;
  }
}

double WhitenedSparseGp::log_q(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const {
  try {
    const double lp = evaluate(x, &grad, false);
    if (!std::isfinite(lp) || !grad.allFinite()) return kNegInf;
    return lp;
  } catch (const NumericalError&) {
    return kNegInf;
  } catch (const DomainError&) {
    return kNegInf;
  }
}

double WhitenedSparseGp::expected_log_lik(const Eigen::VectorXd& x) const {
  return evaluate(x, nullptr, true);
}

WhitenedState WhitenedSparseGp::split(const Eigen::VectorXd& x) const {
  if (x.size() != dim_) throw InvalidArgument("state vector has the wrong dimension");
  return {x.head(u_), x.tail(dim_ - u_)};
}

Eigen::VectorXd WhitenedSparseGp::join(const WhitenedState& s) const {
  if (s.nu.size() != u_ || s.theta_free.size() != dim_ - u_) {
    throw InvalidArgument("whitened state has the wrong shape");
  }
  Eigen::VectorXd x(dim_);
  x << s.nu, s.theta_free;
  return x;
}

Eigen::VectorXd WhitenedSparseGp::initial_state(const ParamVector& beta, double lengthscale,
                                                double variance, const NoiseModel& noise) const {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(dim_);
  Eigen::Index at = u_;
  if (beta_free_) {
    if (beta.kind() != kind_) throw InvalidArgument("initial parameters belong to another model");
    x.segment(at, p_) = beta.values().array().log();
    at += p_;
  }
  if (ell_free_) x[at++] = std::log(lengthscale);
  if (var_free_) x[at++] = std::log(variance);
  if (noise_free_) {
    if (noise_.kind == NoiseKind::Gaussian) {
      x[at++] = std::log(noise.variance);
    } else {
      x[at++] = std::log(noise.scale);
      x[at++] = std::log(std::max(noise.dof - 1.0, 1e-6));
    }
  }
  return x;
}

WhitenedSparseGp::Constrained WhitenedSparseGp::constrained(const Eigen::VectorXd& x) const {
  const Theta t = theta(x);
  return {ParamVector(kind_, t.beta), t.lengthscale, t.variance, t.noise, x.head(u_)};
}

Eigen::VectorXd WhitenedSparseGp::inducing_values(const Eigen::VectorXd& x) const {
  const Theta t = theta(x);
  const auto& z = inducing_.locations();
  Eigen::MatrixXd l;
  if (fixed_l_) {
    l = *fixed_l_;
  } else {
    l = chol_jitter(inducing_cov(SeKernel(t.variance, t.lengthscale), z)).lower;
  }
  return evaluate_all(kind_, t.beta, z, options_.shift) +
         l.triangularView<Eigen::Lower>() * x.head(u_);
}

std::vector<std::string> WhitenedSparseGp::column_names() const {
  std::vector<std::string> names;
  for (auto n : param_names(kind_)) names.emplace_back(n);
  names.emplace_back("lengthscale");
  names.emplace_back("variance");
  if (noise_.kind == NoiseKind::Gaussian) {
    names.emplace_back("noise_var");
  } else {
    names.emplace_back("t_scale");
    names.emplace_back("t_dof");
  }
  for (Eigen::Index i = 0; i < u_; ++i) names.push_back("nu_" + std::to_string(i));
  return names;
}

Eigen::VectorXd WhitenedSparseGp::constrained_row(const Eigen::VectorXd& x) const {
  const Theta t = theta(x);
  const Eigen::Index noise_cols = noise_.kind == NoiseKind::Gaussian ? 1 : 2;
  Eigen::VectorXd row(p_ + 2 + noise_cols + u_);
  row.head(p_) = t.beta;
  row[p_] = t.lengthscale;
  row[p_ + 1] = t.variance;
  if (noise_.kind == NoiseKind::Gaussian) {
    row[p_ + 2] = t.noise.variance;
  } else {
    row[p_ + 2] = t.noise.scale;
    row[p_ + 3] = t.noise.dof;
  }
  row.tail(u_) = x.head(u_);
  return row;
}

}  // namespace fdcal

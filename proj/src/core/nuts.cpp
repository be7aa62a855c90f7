#include "nuts.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <Eigen/Cholesky>

#include <Eigen/Eigenvalues>

#include "error.hpp"
#include "optimize.hpp"

namespace fdcal {

namespace {

constexpr double kMaxEnergyError = 1000.0;

struct Point {
  Eigen::VectorXd x;
  Eigen::VectorXd r;
  Eigen::VectorXd g;
  double lp = 0.0;
};

struct Subtree {
  Point minus;
  Point plus;
  Point proposal;
  double n = 0.0;  // number of slice-valid states
  bool ok = true;  // no U-turn and no divergence
  bool divergent = false;
  double alpha = 0.0;
  double n_alpha = 0.0;
};

class Sampler {
 public:
  Sampler(const LogDensity& target, const NutsConfig& cfg, Eigen::Index dim)
      : target_(target), cfg_(cfg), rng_(cfg.seed) {
    set_inverse_metric(Eigen::MatrixXd::Identity(dim, dim));
  }

  void set_inverse_metric(const Eigen::MatrixXd& m) {
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() != Eigen::Success) return;  // keep the previous metric
    inv_metric_ = m;
    chol_ = llt.matrixL();
  }

  double eval(const Eigen::VectorXd& x, Eigen::VectorXd& g) const {
    g.resize(x.size());
    const double lp = target_(x, g);
    if (!std::isfinite(lp) || !g.allFinite()) return -std::numeric_limits<double>::infinity();
    return lp;
  }

  Eigen::VectorXd velocity(const Eigen::VectorXd& r) const { return inv_metric_ * r; }

  double kinetic(const Eigen::VectorXd& r) const { return 0.5 * r.dot(inv_metric_ * r); }

  // r ~ N(0, M) with M^{-1} = L L^T: r = L^{-T} z.
  Eigen::VectorXd draw_momentum() {
    Eigen::VectorXd z(inv_metric_.rows());
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = normal_(rng_);
    return chol_.transpose().triangularView<Eigen::Upper>().solve(z);
  }

  Point leapfrog(const Point& p, double eps) const {
    Point q;
    q.r = p.r + 0.5 * eps * p.g;
    q.x = p.x + eps * velocity(q.r);
    q.lp = eval(q.x, q.g);
    if (std::isfinite(q.lp)) q.r += 0.5 * eps * q.g;
    return q;
  }

  bool no_uturn(const Point& minus, const Point& plus) const {
    const Eigen::VectorXd dx = plus.x - minus.x;
    return dx.dot(velocity(minus.r)) >= 0.0 && dx.dot(velocity(plus.r)) >= 0.0;
  }

  Subtree build(const Point& start, double log_u, int dir, int depth, double eps, double h0) {
    if (depth == 0) {
      Subtree t;
      Point q = leapfrog(start, dir * eps);
      const double h = std::isfinite(q.lp) ? q.lp - kinetic(q.r)
                                           : -std::numeric_limits<double>::infinity();
      t.n = (log_u <= h) ? 1.0 : 0.0;
      t.ok = log_u < h + kMaxEnergyError;
      t.divergent = !t.ok;
      t.alpha = std::isfinite(h) ? std::min(1.0, std::exp(h - h0)) : 0.0;
      t.n_alpha = 1.0;
      t.minus = q;
      t.plus = q;
      t.proposal = std::move(q);
      return t;
    }
    Subtree t = build(start, log_u, dir, depth - 1, eps, h0);
    if (!t.ok) return t;
    Subtree t2 = build(dir < 0 ? t.minus : t.plus, log_u, dir, depth - 1, eps, h0);
    if (dir < 0) {
      t.minus = t2.minus;
    } else {
      t.plus = t2.plus;
    }
    if (t2.n > 0.0 && unit_(rng_) < t2.n / (t.n + t2.n)) t.proposal = t2.proposal;
    t.alpha += t2.alpha;
    t.n_alpha += t2.n_alpha;
    t.n += t2.n;
    t.divergent = t.divergent || t2.divergent;
    t.ok = t2.ok && no_uturn(t.minus, t.plus);
    return t;
  }

  struct Transition {
    double accept = 0.0;
    int depth = 0;
    bool divergent = false;
  };

  Transition transition(Point& cur, double eps) {
    cur.r = draw_momentum();
    const double h0 = cur.lp - kinetic(cur.r);
    const double log_u = h0 - exponential_(rng_);
    Point minus = cur, plus = cur;
    double n = 1.0;
    bool ok = true;
    Transition tr;
    while (ok && tr.depth < cfg_.max_depth) {
      const int dir = unit_(rng_) < 0.5 ? -1 : 1;
      Subtree t = build(dir < 0 ? minus : plus, log_u, dir, tr.depth, eps, h0);
      if (dir < 0) {
        minus = t.minus;
      } else {
        plus = t.plus;
      }
      if (t.ok && t.n > 0.0 && unit_(rng_) < t.n / n) cur = t.proposal;
      n += t.n;
      ok = t.ok && no_uturn(minus, plus);
      tr.divergent = tr.divergent || t.divergent;
      tr.accept = t.n_alpha > 0.0 ? t.alpha / t.n_alpha : 0.0;
      ++tr.depth;
    }
    return tr;
  }

  double find_reasonable_step(const Point& cur, double eps) {
    Point p = cur;
    p.r = draw_momentum();
    const double h0 = p.lp - kinetic(p.r);
    auto log_ratio = [&](double e) {
      Point q = leapfrog(p, e);
      if (!std::isfinite(q.lp)) return -std::numeric_limits<double>::infinity();
      return q.lp - kinetic(q.r) - h0;
    };
    double lr = log_ratio(eps);
    const int a = lr > std::log(0.5) ? 1 : -1;
    for (int it = 0; it < 100 && a * lr > -a * std::log(2.0); ++it) {
      eps *= std::pow(2.0, a);
      lr = log_ratio(eps);
    }
    return eps;
  }

  const LogDensity& target_;
  const NutsConfig& cfg_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> unit_{0.0, 1.0};
  std::exponential_distribution<double> exponential_{1.0};
  Eigen::MatrixXd inv_metric_;
  Eigen::MatrixXd chol_;
};

// Dual averaging of log step size toward a target acceptance statistic.
struct DualAveraging {
  double mu = 0.0, h_bar = 0.0, log_eps_bar = 0.0;
  int m = 0;
  static constexpr double kGamma = 0.05, kT0 = 10.0, kKappa = 0.75;

  void restart(double eps) {
    mu = std::log(10.0 * eps);
    h_bar = 0.0;
    log_eps_bar = 0.0;
    m = 0;
  }
  double update(double accept, double target) {
    ++m;
    const double md = m;
    h_bar = (1.0 - 1.0 / (md + kT0)) * h_bar + (target - accept) / (md + kT0);
    const double log_eps = mu - std::sqrt(md) / kGamma * h_bar;
    const double w = std::pow(md, -kKappa);
    log_eps_bar = w * log_eps + (1.0 - w) * log_eps_bar;
    return std::exp(log_eps);
  }
  double final_step() const { return std::exp(log_eps_bar); }
};

// End indices (exclusive) of the slow metric windows within burn-in.
std::vector<int> metric_windows(int burn_in) {
  std::vector<int> ends;
  if (burn_in < 20) return ends;
  int init_buf = 75, term_buf = 50, base = 25;
  if (burn_in < init_buf + term_buf + base) {
    init_buf = static_cast<int>(0.15 * burn_in);
    term_buf = static_cast<int>(0.1 * burn_in);
    base = burn_in - init_buf - term_buf;
  }
  const int last = burn_in - term_buf;
  int start = init_buf, size = base;
  while (start < last) {
    int end = start + size;
    if (end + 2 * size > last) end = last;
    ends.push_back(end);
    start = end;
    size *= 2;
  }
  return ends;
}

}  // namespace

LaplaceStart laplace_start(const LogDensity& target, const Eigen::VectorXd& x0, int max_iterations,
                           double max_variance) {
  const auto dim = x0.size();
  LaplaceStart out;
  out.x = x0;
  out.inverse_metric = Eigen::MatrixXd::Identity(dim, dim);
  const Objective neg = [&](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
    Eigen::VectorXd gg(x.size());
    const double lp = target(x, gg);
    if (!std::isfinite(lp) || !gg.allFinite()) return std::numeric_limits<double>::infinity();
    if (g) *g = -gg;
    return -lp;
  };
  try {
    OptimOptions oo;
    oo.max_iterations = max_iterations;
    oo.max_step = 1.0;
    const auto r = minimize_bfgs(neg, x0, oo);
    if (std::isfinite(r.f)) {
      out.x = r.x;
      out.mode_found = r.converged;
    }
  } catch (const NumericalError&) {
    return out;
  }
  Eigen::MatrixXd h(dim, dim);
  Eigen::VectorXd gp(dim), gm(dim);
  for (Eigen::Index j = 0; j < dim; ++j) {
    const double step = 1e-5 * std::max(1.0, std::abs(out.x[j]));
    Eigen::VectorXd xp = out.x, xm = out.x;
    xp[j] += step;
    xm[j] -= step;
    if (!std::isfinite(target(xp, gp)) || !std::isfinite(target(xm, gm))) return out;
    h.col(j) = -(gp - gm) / (2.0 * step);
  }
  h = 0.5 * (h + h.transpose()).eval();
  if (!h.allFinite()) return out;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h);
  if (es.info() != Eigen::Success) return out;
  const Eigen::VectorXd var =
      es.eigenvalues().unaryExpr([&](double l) { return l > 0.0 ? std::clamp(1.0 / l, 1e-8, max_variance) : max_variance; });
  out.inverse_metric = es.eigenvectors() * var.asDiagonal() * es.eigenvectors().transpose();
  return out;
}

int NutsChain::divergence_count() const {
  return static_cast<int>(std::count(divergent.begin(), divergent.end(), true));
}

double NutsChain::mean_accept() const {
  if (accept_stat.empty()) return 0.0;
  double s = 0.0;
  for (double a : accept_stat) s += a;
  return s / static_cast<double>(accept_stat.size());
}

NutsChain nuts_sample(const LogDensity& target, const Eigen::VectorXd& init,
                      const NutsConfig& config) {
  if (config.burn_in < 0 || config.draws < 1) throw InvalidArgument("NUTS needs burn_in >= 0 and draws >= 1");
  if (!(config.target_accept > 0.0 && config.target_accept < 1.0)) {
    throw InvalidArgument("target acceptance must lie in (0, 1)");
  }
  if (config.max_depth < 1) throw InvalidArgument("max tree depth must be positive");
  const auto dim = init.size();
  Sampler s(target, config, dim);
  if (config.initial_inverse_metric.size() > 0) {
    if (config.initial_inverse_metric.rows() != dim || config.initial_inverse_metric.cols() != dim) {
      throw InvalidArgument("initial metric has the wrong shape");
    }
    s.set_inverse_metric(config.initial_inverse_metric);
  }

  Point cur;
  cur.x = init;
  cur.lp = s.eval(cur.x, cur.g);
  if (!std::isfinite(cur.lp)) throw NumericalError("log density is not finite at the initial state");

  double eps = s.find_reasonable_step(cur, config.initial_step > 0.0 ? config.initial_step : 1.0);
  DualAveraging da;
  da.restart(eps);

  const auto windows = config.adapt_metric ? metric_windows(config.burn_in) : std::vector<int>{};
  std::size_t next_window = 0;
  int window_start = windows.empty() ? 0 : (config.burn_in < 150 ? static_cast<int>(0.15 * config.burn_in) : 75);
  Eigen::VectorXd w_mean = Eigen::VectorXd::Zero(dim);
  Eigen::MatrixXd w_m2 = Eigen::MatrixXd::Zero(dim, dim);
  int w_count = 0;

  NutsChain chain;
  chain.burn_in = config.burn_in;
  chain.seed = config.seed;
  chain.draws.resize(config.draws, dim);
  const int total = config.burn_in + config.draws;
  for (int it = 0; it < total; ++it) {
    const bool warm = it < config.burn_in;
    chain.step_trace.push_back(eps);
    const auto tr = s.transition(cur, eps);
    if (warm) {
      eps = da.update(tr.accept, config.target_accept);
      if (next_window < windows.size() && it >= window_start) {
        ++w_count;
        const Eigen::VectorXd delta = cur.x - w_mean;
        w_mean += delta / w_count;
        w_m2 += delta * (cur.x - w_mean).transpose();
        if (it + 1 == windows[next_window]) {
          const double n = w_count;
          Eigen::MatrixXd cov = w_m2 / std::max(n - 1.0, 1.0);
          if (!config.dense_metric) cov = Eigen::MatrixXd(cov.diagonal().asDiagonal());
          // shrink toward a small multiple of the identity
          cov *= n / (n + 5.0);
          cov.diagonal().array() += 1e-3 * (5.0 / (n + 5.0));
          s.set_inverse_metric(cov);
          eps = s.find_reasonable_step(cur, eps);
          da.restart(eps);
          w_mean.setZero();
          w_m2.setZero();
          w_count = 0;
          window_start = it + 1;
          ++next_window;
        }
      }
      if (it + 1 == config.burn_in) eps = da.final_step();
      continue;
    }
    const int d = it - config.burn_in;
    chain.draws.row(d) = cur.x.transpose();
    chain.log_density.push_back(cur.lp);
    chain.accept_stat.push_back(tr.accept);
    chain.tree_depth.push_back(tr.depth);
    chain.divergent.push_back(tr.divergent);
  }
  chain.inverse_metric = s.inv_metric_;
  chain.step_size = eps;
  return chain;
}

}  // namespace fdcal

#include "optimize.hpp"

#include <algorithm>
#include <cmath>

#include "error.hpp"

namespace fdcal {

namespace {

bool gradient_small(const Eigen::VectorXd& g, double f, double tol) {
  return g.lpNorm<Eigen::Infinity>() < tol * std::max(1.0, std::abs(f));
}

}  // namespace

OptimResult minimize_bfgs(const Objective& objective, Eigen::VectorXd x0,
                          const OptimOptions& options) {
  const auto dim = x0.size();
  OptimResult res;
  res.x = std::move(x0);
  res.grad = Eigen::VectorXd::Zero(dim);
  res.f = objective(res.x, &res.grad);
  if (!std::isfinite(res.f) || !res.grad.allFinite()) {
    throw NumericalError("objective is not finite at the initial point");
  }
  res.f_trace.push_back(res.f);

  Eigen::MatrixXd h = Eigen::MatrixXd::Identity(dim, dim);
  bool h_scaled = false;
  int resets = 0;
  Eigen::VectorXd g_new(dim);

  for (res.iterations = 0; res.iterations < options.max_iterations; ++res.iterations) {
    if (gradient_small(res.grad, res.f, options.grad_tol)) {
      res.converged = true;
      res.message = "gradient tolerance reached";
      return res;
    }
    Eigen::VectorXd dir = -(h * res.grad);
    double slope = res.grad.dot(dir);
    if (!(slope < 0.0)) {
      h.setIdentity();
      h_scaled = false;
      dir = -res.grad;
      slope = res.grad.dot(dir);
    }
    double step = 1.0;
    const double dir_norm = dir.lpNorm<Eigen::Infinity>();
    if (dir_norm * step > options.max_step) step = options.max_step / dir_norm;
    if (!h_scaled) step = std::min(step, 1.0 / std::max(1.0, res.grad.lpNorm<Eigen::Infinity>()));

    bool accepted = false;
    Eigen::VectorXd x_new;
    double f_new = 0.0;
    for (int bt = 0; bt < 60; ++bt, step *= 0.5) {
      x_new = res.x + step * dir;
      f_new = objective(x_new, &g_new);
      if (std::isfinite(f_new) && g_new.allFinite() && f_new <= res.f + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (resets++ < 2 && h_scaled) {
        h.setIdentity();
        h_scaled = false;
        continue;
      }
      res.converged = gradient_small(res.grad, res.f, options.grad_tol);
      res.message = "line search failed to make progress";
      return res;
    }

    const Eigen::VectorXd s = x_new - res.x;
    const Eigen::VectorXd y = g_new - res.grad;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (!h_scaled) {
        h = Eigen::MatrixXd::Identity(dim, dim) * (sy / y.squaredNorm());
        h_scaled = true;
      }
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd a = Eigen::MatrixXd::Identity(dim, dim) - rho * s * y.transpose();
      h = a * h * a.transpose() + rho * s * s.transpose();
    }
    res.x = std::move(x_new);
    res.f = f_new;
    res.grad = g_new;
    res.f_trace.push_back(res.f);
  }
  res.converged = gradient_small(res.grad, res.f, options.grad_tol);
  res.message = res.converged ? "gradient tolerance reached" : "iteration limit reached";
  return res;
}

}  // namespace fdcal

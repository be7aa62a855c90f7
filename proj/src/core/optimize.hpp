#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace fdcal {

// Returns the objective at x and, when grad is non-null, writes the gradient.
// A non-finite return marks x as infeasible; the line search backs away from it.
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd* grad)>;

struct OptimOptions {
  int max_iterations = 500;
  // converged when ||grad||_inf < grad_tol * max(1, |f|)
  double grad_tol = 1e-6;
  // cap on the infinity norm of a single step
  double max_step = 5.0;
};

struct OptimResult {
  Eigen::VectorXd x;
  double f = 0.0;
  Eigen::VectorXd grad;
  bool converged = false;
  int iterations = 0;
  std::string message;
  std::vector<double> f_trace;  // objective after every accepted step, starting at x0
};

// Dense BFGS with Armijo backtracking.
OptimResult minimize_bfgs(const Objective& objective, Eigen::VectorXd x0,
                          const OptimOptions& options = {});

}  // namespace fdcal

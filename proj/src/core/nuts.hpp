#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Core>

namespace fdcal {

// Log density with gradient; returns -infinity outside the support.
using LogDensity = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& grad)>;

struct NutsConfig {
  int burn_in = 2000;
  int draws = 3000;
  double target_accept = 0.8;
  int max_depth = 10;
  std::uint64_t seed = 0;
  // Metric estimated in expanding windows during burn-in; dense or diagonal.
  bool adapt_metric = true;
  bool dense_metric = true;
  double initial_step = 0.0;  // 0: heuristic search
  Eigen::MatrixXd initial_inverse_metric;  // empty: identity
};

struct NutsChain {
  Eigen::MatrixXd draws;              // draws x dim, post burn-in
  std::vector<double> log_density;    // per stored draw
  std::vector<double> accept_stat;    // per stored draw
  std::vector<int> tree_depth;        // per stored draw
  std::vector<double> step_trace;     // step size used at every iteration
  std::vector<bool> divergent;        // per stored draw
  Eigen::MatrixXd inverse_metric;    // position covariance used as M^{-1}
  double step_size = 0.0;             // final adapted step size
  int burn_in = 0;
  std::uint64_t seed = 0;

  int divergence_count() const;
  double mean_accept() const;
};

struct LaplaceStart {
  Eigen::VectorXd x;               // posterior mode, or the input when the search failed
  Eigen::MatrixXd inverse_metric;  // inverse negative Hessian with eigenvalues clipped
  bool mode_found = false;
};

// Mode search by BFGS followed by a finite-difference Hessian of the gradient.
// Eigenvalues of the covariance estimate are clipped to [1e-8, max_variance].
LaplaceStart laplace_start(const LogDensity& target, const Eigen::VectorXd& x0,
                           int max_iterations = 500, double max_variance = 100.0);

// No-U-Turn sampler with slice-based tree building, dual-averaging step-size
// adaptation, and (optionally) metric adaptation, both during burn-in only.
NutsChain nuts_sample(const LogDensity& target, const Eigen::VectorXd& init,
                      const NutsConfig& config);

}  // namespace fdcal

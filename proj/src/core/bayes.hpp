#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dataset.hpp"
#include "fd_models.hpp"
#include "gp.hpp"
#include "quadrature.hpp"

namespace fdcal {

struct NormalPrior {
  double mean;
  double sd;
};

// Gaussian priors on the mean-function parameters and Half-Cauchy priors on the
// positive hyperparameters.
struct PriorSpec {
  std::vector<NormalPrior> beta;
  double half_cauchy_scale = 1.0;

  // Mean at the WLS estimate x, sd = max(x / 6, 10).
  static PriorSpec centered_on(const ParamVector& wls);
};

// log of 2 / (pi s (1 + (x/s)^2)) on x >= 0.
double half_cauchy_log_pdf(double x, double scale = 1.0);

enum class NoiseKind { Gaussian, StudentT };

struct NoiseModel {
  NoiseKind kind = NoiseKind::StudentT;
  double variance = 1.0;  // Gaussian
  double scale = 1.0;     // Student-t
  double dof = 4.0;       // Student-t, kept >= 1
};

// Unconstrained sampler coordinates. theta_free packs, in order and skipping
// fixed entries: log beta, log lengthscale, log variance, then the noise
// parameters (log variance for Gaussian; log scale and log(dof - 1) for Student-t).
struct WhitenedState {
  Eigen::VectorXd nu;
  Eigen::VectorXd theta_free;
};

struct BayesOptions {
  int gh_order = 20;
  GreenbergShift shift;
  std::optional<ParamVector> fixed_beta;
  std::optional<double> fixed_lengthscale;
  std::optional<double> fixed_variance;
  bool fixed_noise = false;
  // Evaluate the Gaussian expected log-likelihood by quadrature instead of in closed form.
  bool gaussian_by_quadrature = false;
};

// Whitened variational sparse GP: f_u = m(k_u; beta) + R nu with R R^T = C_uu,
// nu ~ N(0, I). log_q is the optimal variational log density over (nu, theta)
// up to its normalizing constant, including the log-Jacobians of the transforms.
class WhitenedSparseGp {
 public:
  WhitenedSparseGp(FdModelKind kind, Dataset ds, InducingSet inducing, PriorSpec priors,
                   NoiseModel noise, BayesOptions options = {});

  Eigen::Index dim() const noexcept { return dim_; }
  Eigen::Index num_inducing() const noexcept { return u_; }
  FdModelKind kind() const noexcept { return kind_; }
  const Dataset& data() const noexcept { return ds_; }
  const InducingSet& inducing() const noexcept { return inducing_; }
  const BayesOptions& options() const noexcept { return options_; }

  // Non-finite or failing evaluations return -infinity.
  double log_q(const Eigen::VectorXd& x) const;
  double log_q(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const;
  // The data term sum_i E[log p(v_i | f_i)] alone.
  double expected_log_lik(const Eigen::VectorXd& x) const;

  WhitenedState split(const Eigen::VectorXd& x) const;
  Eigen::VectorXd join(const WhitenedState& s) const;

  // Packs the given constrained values with nu = 0; fixed entries are ignored.
  Eigen::VectorXd initial_state(const ParamVector& beta, double lengthscale, double variance,
                                const NoiseModel& noise) const;

  struct Constrained {
    ParamVector beta;
    double lengthscale;
    double variance;
    NoiseModel noise;
    Eigen::VectorXd nu;
  };
  Constrained constrained(const Eigen::VectorXd& x) const;

  // f_u = m(k_u; beta) + R nu.
  Eigen::VectorXd inducing_values(const Eigen::VectorXd& x) const;

  // Columns of constrained_row: parameter names, hyperparameters, noise, nu_0..nu_{u-1}.
  std::vector<std::string> column_names() const;
  Eigen::VectorXd constrained_row(const Eigen::VectorXd& x) const;

 private:
  struct Theta {
    Eigen::VectorXd beta;
    double lengthscale;
    double variance;
    NoiseModel noise;
  };
  Theta theta(const Eigen::VectorXd& x) const;
  double evaluate(const Eigen::VectorXd& x, Eigen::VectorXd* grad, bool data_only) const;

  FdModelKind kind_;
  Dataset ds_;
  InducingSet inducing_;
  PriorSpec priors_;
  NoiseModel noise_;
  BayesOptions options_;
  GaussHermite gh_;
  Eigen::Index u_;
  Eigen::Index p_;
  Eigen::Index dim_;
  bool beta_free_, ell_free_, var_free_, noise_free_;
  // V = L^{-1} K_un and L, precomputed when the kernel hyperparameters are fixed
  std::optional<Eigen::MatrixXd> fixed_v_;
  std::optional<Eigen::MatrixXd> fixed_l_;
};

}  // namespace fdcal

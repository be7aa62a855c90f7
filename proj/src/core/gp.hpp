#pragma once

#include <optional>
#include <string>

#include <Eigen/Core>
#include <json.hpp>

#include "dataset.hpp"
#include "fd_models.hpp"
#include "kernel.hpp"
#include "optimize.hpp"

namespace fdcal {

struct GpHyper {
  SeKernel kernel;
  double noise_var;
};

// Strictly ascending inducing locations.
class InducingSet {
 public:
  InducingSet() = default;
  explicit InducingSet(Eigen::VectorXd locations);

  const Eigen::VectorXd& locations() const noexcept { return locations_; }
  std::size_t size() const noexcept { return static_cast<std::size_t>(locations_.size()); }

 private:
  Eigen::VectorXd locations_;
};

// u evenly spaced points from the minimum to the maximum observed density, both ends included.
InducingSet default_inducing(const Dataset& ds, std::size_t u = 20);

// Relative nugget added to C_uu on the sparse path (scales with the kernel variance).
inline constexpr double kInducingNugget = 1e-8;

// C_uu plus the relative nugget.
Eigen::MatrixXd inducing_cov(const SeKernel& ker, const Eigen::VectorXd& z);

// Derivative of V = L^{-1} K_un with respect to log(lengthscale), where L is the
// lower Cholesky factor of inducing_cov(ker, z):
//   dV = L^{-1} dK_un - phi(L^{-1} dK_uu L^{-T}) V,  phi = lower triangle, halved diagonal.
Eigen::MatrixXd projection_dlog_lengthscale(const SeKernel& ker, const Eigen::VectorXd& z,
                                            const Eigen::VectorXd& k, const Eigen::MatrixXd& lower,
                                            const Eigen::MatrixXd& v,
                                            const Eigen::MatrixXd* dk_un = nullptr);

double nll_dense(FdModelKind kind, const ParamVector& beta, const GpHyper& hyper,
                 const Dataset& ds, GreenbergShift shift = {});
double nll_sparse(FdModelKind kind, const ParamVector& beta, const GpHyper& hyper,
                  const InducingSet& inducing, const Dataset& ds, GreenbergShift shift = {});

// Negative log marginal likelihood at the packed point
//   x = [log beta..., log lengthscale, log variance, log noise_var]
// with its analytic gradient in the same coordinates. inducing == nullptr
// selects the dense path.
double gp_nll_packed(FdModelKind kind, const Dataset& ds, const InducingSet* inducing,
                     const Eigen::VectorXd& x, Eigen::VectorXd* grad, GreenbergShift shift = {});

struct GpMleOptions {
  std::optional<InducingSet> inducing;  // empty: dense path (n <= 2000)
  GreenbergShift shift;
  std::optional<ParamVector> init;      // empty: WLS estimate, else default_init
  std::optional<double> fixed_lengthscale;
  std::optional<double> fixed_variance;
  std::optional<double> fixed_noise_var;
  double barrier_weight = 1e-3;
  bool finite_difference_gradient = false;  // debugging aid
  OptimOptions optim;
};

struct GpFit {
  FdModelKind kind = FdModelKind::Greenshields;
  ParamVector beta;
  GpHyper hyper{SeKernel(1.0, 1.0), 1.0};
  std::optional<InducingSet> inducing;
  GreenbergShift shift;
  double nll = 0.0;
  bool converged = false;
  int iterations = 0;
  std::string message;
};

GpFit fit_gp_mle(FdModelKind kind, const Dataset& ds, const GpMleOptions& options = {});

struct Prediction {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;
};

// Predictive mean and variance of f = m + g at the query densities. Sparse fits
// use the deterministic-training-conditional equations; dense fits the exact GP.
Prediction predict_f(const GpFit& fit, const Dataset& ds, const Eigen::VectorXd& query);

nlohmann::json to_json(const GpFit& fit);

}  // namespace fdcal

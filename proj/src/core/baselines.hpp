#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include <Eigen/Core>
#include <json.hpp>

#include "dataset.hpp"
#include "fd_models.hpp"
#include "optimize.hpp"

namespace fdcal {

enum class FitMethod { Ls, Wls, GpMle, GpMcmc };

std::string_view method_name(FitMethod m);
FitMethod parse_method(std::string_view name);

struct FitResult {
  FdModelKind kind = FdModelKind::Greenshields;
  ParamVector beta;
  double objective = 0.0;
  bool converged = false;
  int iterations = 0;
  FitMethod method = FitMethod::Ls;
  std::string message;
};

struct LsOptions {
  GreenbergShift shift;
  // Extra starts are drawn as init * exp(U(-spread, spread)) per parameter.
  // Unset means: on for the three-parameter models, off otherwise.
  std::optional<bool> multi_start;
  int extra_starts = 5;
  double spread = 0.2;
  std::uint64_t seed = 0;
  OptimOptions optim;
};

// Density-gap weights: (k_{i+1} - k_{i-1}) / 2 inside, one-sided gaps at the
// two ends, rescaled so they sum to n. Requires a density-sorted dataset.
Eigen::VectorXd wls_weights(const Dataset& ds);
// Same rule, before the rescaling.
Eigen::VectorXd wls_raw_weights(const Dataset& ds);

// Minimizes sum_i w_i (v_i - m(k_i; beta))^2 over log(beta).
FitResult fit_weighted(FdModelKind kind, const Dataset& ds, const ParamVector& init,
                       const Eigen::VectorXd& weights, const LsOptions& options = {});

FitResult fit_ls(FdModelKind kind, const Dataset& ds, const ParamVector& init,
                 const LsOptions& options = {});
FitResult fit_wls(FdModelKind kind, const Dataset& ds, const ParamVector& init,
                  const LsOptions& options = {});

// Weighted squared error and its gradient with respect to log(beta).
double weighted_sse(FdModelKind kind, const Dataset& ds, const Eigen::VectorXd& weights,
                    const Eigen::VectorXd& log_beta, Eigen::VectorXd* grad,
                    GreenbergShift shift = {});

nlohmann::json to_json(const FitResult& r);

}  // namespace fdcal

#pragma once

#include <cstdint>
#include <functional>

#include <Eigen/Core>

#include "dataset.hpp"
#include "fd_models.hpp"

namespace fdcal::test {

inline ParamVector reference_params(FdModelKind kind) {
  switch (kind) {
    case FdModelKind::Greenshields: return ParamVector(kind, Eigen::Vector2d(100.0, 150.0));
    case FdModelKind::Greenberg: return ParamVector(kind, Eigen::Vector2d(30.0, 160.0));
    case FdModelKind::Underwood: return ParamVector(kind, Eigen::Vector2d(80.0, 30.0));
    case FdModelKind::Northwestern: return ParamVector(kind, Eigen::Vector2d(80.0, 40.0));
    case FdModelKind::Newell: return ParamVector(kind, Eigen::Vector3d(90.0, 160.0, 1500.0));
    case FdModelKind::ThreePL: return ParamVector(kind, Eigen::Vector3d(90.0, 30.0, 15.0));
  }
  return {};
}

// Densities spread over [k_min, 150] with an SE residual (l = 10, s2 = 25) and noise sd 3.
inline Dataset noisy_data(FdModelKind kind, std::size_t n, std::uint64_t seed, double low_weight = 0.5) {
  SynthSpec s;
  s.truth = reference_params(kind);
  s.residual_kernel = SeKernel(25.0, 10.0);
  s.noise_sd = 3.0;
  s.n = n;
  s.seed = seed;
  s.sampler.low_weight = low_weight;
  s.sampler.k_min = 1.0;
  return synthesize(s).data;
}

inline Dataset exact_data(const ParamVector& p, std::size_t n, std::uint64_t seed) {
  SynthSpec s;
  s.truth = p;
  s.n = n;
  s.seed = seed;
  s.sampler.low_weight = 0.5;
  s.sampler.k_min = 1.0;
  return synthesize(s).data;
}

inline Eigen::VectorXd central_diff(const std::function<double(const Eigen::VectorXd&)>& f,
                                    const Eigen::VectorXd& x, double rel_step = 1e-5) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = rel_step * std::max(1.0, std::abs(x[i]));
    Eigen::VectorXd xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    g[i] = (f(xp) - f(xm)) / (2.0 * h);
  }
  return g;
}

inline double rel_err(const Eigen::VectorXd& a, const Eigen::VectorXd& ref) {
  return (a - ref).norm() / std::max(ref.norm(), 1e-300);
}

}  // namespace fdcal::test

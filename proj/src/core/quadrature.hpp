#pragma once

#include <cmath>

#include <Eigen/Core>

namespace fdcal {

// Nodes and weights for integrals of the form int exp(-x^2) h(x) dx.
struct GaussHermite {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;

  explicit GaussHermite(int order = 20);

  // E[h(f)] for f ~ N(mean, var), via f = mean + sqrt(2 var) x.
  template <typename F>
  double expectation(double mean, double var, F&& h) const {
    const double scale = std::sqrt(2.0 * (var > 0.0 ? var : 0.0));
    double acc = 0.0;
    for (Eigen::Index j = 0; j < nodes.size(); ++j) acc += weights[j] * h(mean + scale * nodes[j]);
    return acc * kInvSqrtPi;
  }

  static constexpr double kInvSqrtPi = 0.56418958354775628694807945156077;
};

}  // namespace fdcal

#pragma once

#include <Eigen/Core>
#include <json.hpp>

namespace fdcal {

// Squared-exponential covariance c(k, k') = variance * exp(-(k - k')^2 / (2 lengthscale^2)).
class SeKernel {
 public:
  SeKernel(double variance, double lengthscale);

  double variance() const noexcept { return variance_; }
  double lengthscale() const noexcept { return lengthscale_; }

  double operator()(double k, double k2) const noexcept;

  // Matrix with (i, j) = c(xs[i], ys[j]).
  Eigen::MatrixXd cross_cov(const Eigen::VectorXd& xs, const Eigen::VectorXd& ys) const;
  // Elementwise derivative of cross_cov with respect to log(lengthscale).
  Eigen::MatrixXd cross_cov_dlog_lengthscale(const Eigen::VectorXd& xs,
                                             const Eigen::VectorXd& ys) const;
  // Both of the above from one pass of exponentials.
  void cross_cov_with_dlog(const Eigen::VectorXd& xs, const Eigen::VectorXd& ys,
                           Eigen::MatrixXd& cov, Eigen::MatrixXd& dcov) const;

 private:
  double variance_;
  double lengthscale_;
};

nlohmann::json to_json(const SeKernel& k);
SeKernel se_kernel_from_json(const nlohmann::json& j);

}  // namespace fdcal

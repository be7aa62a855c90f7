#include "kernel.hpp"

#include <cmath>

#include "error.hpp"

namespace fdcal {

SeKernel::SeKernel(double variance, double lengthscale)
    : variance_(variance), lengthscale_(lengthscale) {
  if (!std::isfinite(variance) || variance <= 0.0) {
    throw InvalidArgument("kernel variance must be finite and positive");
  }
  if (!std::isfinite(lengthscale) || lengthscale <= 0.0) {
    throw InvalidArgument("kernel lengthscale must be finite and positive");
  }
}

double SeKernel::operator()(double k, double k2) const noexcept {
  const double d = (k - k2) / lengthscale_;
  return variance_ * std::exp(-0.5 * d * d);
}

namespace {

// (xs_i - ys_j)^2 / lengthscale^2
Eigen::ArrayXXd scaled_sq_dist(const Eigen::VectorXd& xs, const Eigen::VectorXd& ys, double ell) {
  const Eigen::ArrayXd a = xs.array() / ell;
  const Eigen::ArrayXd b = ys.array() / ell;
  return (a.replicate(1, b.size()) - b.transpose().replicate(a.size(), 1)).square();
}

}  // namespace

Eigen::MatrixXd SeKernel::cross_cov(const Eigen::VectorXd& xs, const Eigen::VectorXd& ys) const {
  return (variance_ * (-0.5 * scaled_sq_dist(xs, ys, lengthscale_)).exp()).matrix();
}

Eigen::MatrixXd SeKernel::cross_cov_dlog_lengthscale(const Eigen::VectorXd& xs,
                                                     const Eigen::VectorXd& ys) const {
  const Eigen::ArrayXXd d2 = scaled_sq_dist(xs, ys, lengthscale_);
  return (variance_ * (-0.5 * d2).exp() * d2).matrix();
}

void SeKernel::cross_cov_with_dlog(const Eigen::VectorXd& xs, const Eigen::VectorXd& ys,
                                   Eigen::MatrixXd& cov, Eigen::MatrixXd& dcov) const {
  const Eigen::ArrayXXd d2 = scaled_sq_dist(xs, ys, lengthscale_);
  cov = (variance_ * (-0.5 * d2).exp()).matrix();
  dcov = (cov.array() * d2).matrix();
}

nlohmann::json to_json(const SeKernel& k) {
  return {{"variance", k.variance()}, {"lengthscale", k.lengthscale()}};
}

SeKernel se_kernel_from_json(const nlohmann::json& j) {
  return SeKernel(j.at("variance").get<double>(), j.at("lengthscale").get<double>());
}

}  // namespace fdcal

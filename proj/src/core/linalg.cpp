#include "linalg.hpp"

#include <cmath>
#include <string>

#include "error.hpp"

namespace fdcal {

namespace {

constexpr int kMaxJitterRetries = 5;

bool try_llt(const Eigen::MatrixXd& a, Eigen::MatrixXd& lower) {
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) return false;
  lower = llt.matrixL();
  return (lower.diagonal().array() > 0.0).all() && lower.allFinite();
}

}  // namespace

JitteredCholesky chol_jitter(const Eigen::MatrixXd& a) {
  if (a.rows() != a.cols()) throw InvalidArgument("chol_jitter needs a square matrix");
  if (!a.allFinite()) throw NumericalError("chol_jitter: matrix has non-finite entries");
  JitteredCholesky out;
  if (a.rows() == 0) return out;
  if (try_llt(a, out.lower)) return out;

  const double mean_diag = std::abs(a.diagonal().mean());
  double jitter = 1e-8 * (mean_diag > 0.0 ? mean_diag : 1.0);
  for (int attempt = 0; attempt < kMaxJitterRetries; ++attempt, jitter *= 10.0) {
    Eigen::MatrixXd shifted = a;
    shifted.diagonal().array() += jitter;
    if (try_llt(shifted, out.lower)) {
      out.jitter = jitter;
      return out;
    }
  }
  throw NumericalError("cholesky failed after " + std::to_string(kMaxJitterRetries) +
                       " jitter retries (last jitter " + std::to_string(jitter / 10.0) + ")");
}

Eigen::MatrixXd chol_solve(const Eigen::MatrixXd& lower, const Eigen::MatrixXd& b) {
  const auto l = lower.triangularView<Eigen::Lower>();
  Eigen::MatrixXd y = l.solve(b);
  return l.transpose().solve(y);
}

void LowRankSystem::validate() const {
  if (c_uu.rows() != c_uu.cols()) throw InvalidArgument("C_uu must be square");
  if (c_nu.cols() != c_uu.rows()) {
    throw InvalidArgument("C_nu has " + std::to_string(c_nu.cols()) + " columns but C_uu is " +
                          std::to_string(c_uu.rows()) + "x" + std::to_string(c_uu.cols()));
  }
  if (!std::isfinite(noise_var) || noise_var <= 0.0) {
    throw InvalidArgument("noise variance must be finite and positive");
  }
}

LowRankFactor::LowRankFactor(const LowRankSystem& sys) : noise_var_(sys.noise_var), n_(sys.n()) {
  sys.validate();
  l_uu_ = chol_jitter(sys.c_uu);
  v_ = l_uu_.lower.triangularView<Eigen::Lower>().solve(sys.c_nu.transpose());
  Eigen::MatrixXd b = v_ * v_.transpose() / noise_var_;
  b.diagonal().array() += 1.0;
  l_b_ = chol_jitter(b);
}

Eigen::MatrixXd LowRankFactor::solve(const Eigen::MatrixXd& rhs) const {
  if (rhs.rows() != n_) throw InvalidArgument("right-hand side has wrong row count");
  const Eigen::MatrixXd inner = chol_solve(l_b_.lower, v_ * rhs);
  return rhs / noise_var_ - v_.transpose() * inner / (noise_var_ * noise_var_);
}

double LowRankFactor::log_det() const {
  return l_b_.log_det() + static_cast<double>(n_) * std::log(noise_var_);
}

Eigen::VectorXd woodbury_solve(const LowRankSystem& sys, const Eigen::VectorXd& b) {
  return LowRankFactor(sys).solve(b);
}

double logdet_lowrank(const LowRankSystem& sys) { return LowRankFactor(sys).log_det(); }

Eigen::MatrixXd dense_lowrank_matrix(const LowRankSystem& sys) {
  sys.validate();
  if (sys.n() > kDenseLimit) throw InvalidArgument("dense path limited to n <= 2000");
  Eigen::MatrixXd a = sys.c_nu * sys.c_uu.ldlt().solve(sys.c_nu.transpose());
  a.diagonal().array() += sys.noise_var;
  return a;
}

Eigen::VectorXd dense_solve(const Eigen::MatrixXd& a, const Eigen::VectorXd& b) {
  if (a.rows() > kDenseLimit) throw InvalidArgument("dense path limited to n <= 2000");
  const auto f = chol_jitter(a);
  return chol_solve(f.lower, b);
}

double dense_logdet(const Eigen::MatrixXd& a) {
  if (a.rows() > kDenseLimit) throw InvalidArgument("dense path limited to n <= 2000");
  return chol_jitter(a).log_det();
}

}  // namespace fdcal

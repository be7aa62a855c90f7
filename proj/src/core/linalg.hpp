#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>

namespace fdcal {

// Lower factor R with R R^T = A + jitter I.
struct JitteredCholesky {
  Eigen::MatrixXd lower;
  double jitter = 0.0;

  double log_det() const { return 2.0 * lower.diagonal().array().log().sum(); }
};

// Tries A as given, then adds 1e-8 * mean(diag A) and grows it x10 per retry,
// at most five retries. Throws NumericalError if A is still not factorizable.
JitteredCholesky chol_jitter(const Eigen::MatrixXd& A);

// Solves (L L^T) X = B for a lower factor L.
Eigen::MatrixXd chol_solve(const Eigen::MatrixXd& lower, const Eigen::MatrixXd& b);

// C_nu C_uu^{-1} C_nu^T + noise_var I, never formed explicitly on the fast path.
struct LowRankSystem {
  Eigen::MatrixXd c_nu;  // n x u
  Eigen::MatrixXd c_uu;  // u x u, symmetric positive definite
  double noise_var = 1.0;

  Eigen::Index n() const { return c_nu.rows(); }
  Eigen::Index u() const { return c_nu.cols(); }
  void validate() const;
};

// Factorization shared by the Woodbury solve and the determinant lemma.
//
// With C_uu = L L^T and V = L^{-1} C_nu^T, the inner matrix of the inversion
// lemma factors as sigma^-2 C_nu^T C_nu + C_uu = L (I + sigma^-2 V V^T) L^T, so
//   Sigma^{-1} = sigma^-2 I - sigma^-4 V^T B^{-1} V,   B = I + sigma^-2 V V^T
//   log|Sigma| = log|B| + 2n log sigma.
// B has eigenvalues >= 1, which keeps both identities accurate even when C_uu
// is close to singular. All work is O(n u^2).
class LowRankFactor {
 public:
  explicit LowRankFactor(const LowRankSystem& sys);

  Eigen::MatrixXd solve(const Eigen::MatrixXd& b) const;
  double log_det() const;

  const Eigen::MatrixXd& inducing_lower() const noexcept { return l_uu_.lower; }
  const Eigen::MatrixXd& projection() const noexcept { return v_; }  // V, u x n
  const Eigen::MatrixXd& inner_lower() const noexcept { return l_b_.lower; }
  double noise_var() const noexcept { return noise_var_; }
  double inducing_jitter() const noexcept { return l_uu_.jitter; }

 private:
  JitteredCholesky l_uu_;
  Eigen::MatrixXd v_;
  JitteredCholesky l_b_;
  double noise_var_;
  Eigen::Index n_;
};

Eigen::VectorXd woodbury_solve(const LowRankSystem& sys, const Eigen::VectorXd& b);
double logdet_lowrank(const LowRankSystem& sys);

// Dense reference path, O(n^3); refuses n above kDenseLimit.
inline constexpr Eigen::Index kDenseLimit = 2000;
Eigen::MatrixXd dense_lowrank_matrix(const LowRankSystem& sys);
Eigen::VectorXd dense_solve(const Eigen::MatrixXd& a, const Eigen::VectorXd& b);
double dense_logdet(const Eigen::MatrixXd& a);

}  // namespace fdcal

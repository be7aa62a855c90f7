#include "quadrature.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/Eigenvalues>

#include "error.hpp"

namespace fdcal {

// Golub-Welsch: nodes are the eigenvalues of the symmetric Jacobi matrix of the
// Hermite recurrence, weights sqrt(pi) times the squared first eigenvector entries.
GaussHermite::GaussHermite(int order) {
  if (order < 1) throw InvalidArgument("Gauss-Hermite order must be positive");
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(order, order);
  for (int i = 1; i < order; ++i) {
    const double off = std::sqrt(static_cast<double>(i) / 2.0);
    jacobi(i, i - 1) = off;
    jacobi(i - 1, i) = off;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jacobi);
  if (eig.info() != Eigen::Success) throw NumericalError("Gauss-Hermite eigen-decomposition failed");
  nodes = eig.eigenvalues();
  weights = std::sqrt(std::numbers::pi) * eig.eigenvectors().row(0).transpose().array().square();
}

}  // namespace fdcal

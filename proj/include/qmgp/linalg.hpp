#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace qmgp {

class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

// Cholesky with jitter on failure: first tries the matrix as given, then adds
// 1e-9 * mean(diag) to the diagonal, multiplying by 10 on each of up to 3
// retries. Throws NumericalError if all attempts fail.
struct Factor {
  Eigen::MatrixXd L;  // lower triangular
  double jitter = 0.0;

  Eigen::Index size() const { return L.rows(); }
  double logdet() const;  // log |A|
  // A^{-1} B via two triangular solves.
  Eigen::MatrixXd solve(const Eigen::MatrixXd& B) const;
  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
  // L^{-1} B
  Eigen::MatrixXd whiten(const Eigen::MatrixXd& B) const;
  Eigen::VectorXd whiten(const Eigen::VectorXd& b) const;
  Eigen::MatrixXd inverse() const;
};

Factor robust_cholesky(const Eigen::MatrixXd& A);

// log N(x | mean, A) for the factor of A.
double gaussian_logpdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mean, const Factor& f);

}  // namespace qmgp

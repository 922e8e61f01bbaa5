#include "qmgp/linalg.hpp"

#include <cmath>
#include <numbers>

namespace qmgp {

namespace {

bool try_llt(const Eigen::MatrixXd& A, Eigen::MatrixXd& L) {
  Eigen::LLT<Eigen::MatrixXd> llt(A);
  if (llt.info() != Eigen::Success) return false;
  L = llt.matrixL();
  for (Eigen::Index i = 0; i < L.rows(); ++i) {
    if (!(L(i, i) > 0.0) || !std::isfinite(L(i, i))) return false;
  }
  return true;
}

}  // namespace

double Factor::logdet() const { return 2.0 * L.diagonal().array().log().sum(); }

Eigen::MatrixXd Factor::solve(const Eigen::MatrixXd& B) const {
  Eigen::MatrixXd x = L.triangularView<Eigen::Lower>().solve(B);
  L.triangularView<Eigen::Lower>().transpose().solveInPlace(x);
  return x;
}

Eigen::VectorXd Factor::solve(const Eigen::VectorXd& b) const {
  Eigen::VectorXd x = L.triangularView<Eigen::Lower>().solve(b);
  L.triangularView<Eigen::Lower>().transpose().solveInPlace(x);
  return x;
}

Eigen::MatrixXd Factor::whiten(const Eigen::MatrixXd& B) const {
  return L.triangularView<Eigen::Lower>().solve(B);
}

Eigen::VectorXd Factor::whiten(const Eigen::VectorXd& b) const {
  return L.triangularView<Eigen::Lower>().solve(b);
}

Eigen::MatrixXd Factor::inverse() const {
  return solve(Eigen::MatrixXd::Identity(L.rows(), L.rows()).eval());
}

Factor robust_cholesky(const Eigen::MatrixXd& A) {
  Factor f;
  if (A.rows() != A.cols()) throw std::invalid_argument("robust_cholesky: matrix not square");
  if (A.rows() == 0) return f;
  if (!A.allFinite()) throw NumericalError("robust_cholesky: non-finite entries");
  if (try_llt(A, f.L)) return f;
  const double scale = std::max(A.diagonal().mean(), 1e-300);
  double jitter = 1e-9 * scale;
  for (int attempt = 0; attempt <= 3; ++attempt, jitter *= 10.0) {
    Eigen::MatrixXd B = A;
    B.diagonal().array() += jitter;
    if (try_llt(B, f.L)) {
      f.jitter = jitter;
      return f;
    }
  }
  throw NumericalError("Cholesky factorization failed after jitter retries (n = " +
                       std::to_string(A.rows()) + ")");
}

double gaussian_logpdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mean, const Factor& f) {
  const Eigen::VectorXd z = f.whiten((x - mean).eval());
  const double n = static_cast<double>(x.size());
  return -0.5 * (n * std::log(2.0 * std::numbers::pi) + f.logdet() + z.squaredNorm());
}

}  // namespace qmgp

#pragma once

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace qmgp {

enum class CovFamily {
  Exponential,
  GneitingSpaceTime,
  MultivariateNonseparable,
  LatentDistance,
};

// How the spatial lag enters phi_1. `Squared` is the literal form
// exp(-c ||h||^2 / psi_1), `Unsquared` uses exp(-c ||h|| / sqrt(psi_1)),
// which reduces to the exponential covariance when u = 0.
enum class LagArgument { Squared, Unsquared };

// Argument handed to psi_2 for the pair (i, j): delta_ij^2 or delta_ij.
enum class Psi2Argument { DeltaSquared, Delta };

struct LatentDistParams {
  Eigen::VectorXd sigma1;   // shared-component scale per variable
  Eigen::VectorXd sigma2;   // idiosyncratic scale per variable
  Eigen::VectorXd phi_var;  // idiosyncratic decay per variable
  double alpha = 1.0;
  double beta = 0.5;
  double phi = 1.0;
  Eigen::MatrixXd v;        // latent inter-variable distances, zero diagonal
};

/// Covariance parameters theta. alpha_1 = alpha_2 = 1/2 are fixed.
struct CovParams {
  CovFamily family = CovFamily::Exponential;
  LagArgument lag = LagArgument::Squared;
  Psi2Argument psi2_arg = Psi2Argument::DeltaSquared;
  // Last coordinate is time. Used by the space-time families.
  bool time_axis = false;

  double sigma2 = 1.0;
  double c = 1.0;
  double a1 = 1.0;
  double beta1 = 0.5;
  double a2 = 1.0;
  double beta2 = 0.5;
  Eigen::MatrixXd delta;              // q x q dissimilarities (q > 2)
  std::optional<double> psi2_direct;  // q == 2: psi_2 value sampled directly

  LatentDistParams latent;

  int q() const;
  // Throws std::invalid_argument when an invariant is violated.
  void validate() const;

  static CovParams exponential(double sigma2, double c);
  static CovParams gneiting(double sigma2, double c, double a1, double beta1,
                            LagArgument lag = LagArgument::Squared);
};

double psi(double x, double a, double beta);

// psi_2 evaluated for the variable pair (i, j), 0-based.
double psi2_value(int i, int j, const CovParams& p);

// C_ij(h, u) for the space-time families. `h` is the spatial lag, `u` the
// temporal lag (0 when there is no time axis).
double cross_cov(std::span<const double> h, double u, int i, int j, const CovParams& p);

double cross_cov_latent_distance(std::span<const double> h, int i, int j,
                                 const LatentDistParams& p);

// Covariance between variable i at l1 and variable j at l2; dispatches on the
// family and splits the coordinate difference into (h, u).
double cross_cov_at(std::span<const double> l1, std::span<const double> l2, int i, int j,
                    const CovParams& p);

// Dense covariance between two location sets (one location per row). The
// result is (rows * q) x (cols * q) with the q variables of a location
// contiguous.
Eigen::MatrixXd cov_matrix(const Eigen::MatrixXd& rows, const Eigen::MatrixXd& cols,
                           const CovParams& p);
Eigen::MatrixXd cov_matrix(const Eigen::MatrixXd& locs, const CovParams& p);

// Flat view of the free-form parameters, used by the Metropolis step and the
// trace files. Names are stable: sigma2, c, a1, beta1, a2, beta2, psi2,
// delta_i_j, sigma1_r, sigma2_r, phi_r, alpha, beta, phi, v_i_j.
std::vector<std::string> parameter_names(const CovParams& p);
std::vector<double> get_parameters(const CovParams& p);
void set_parameters(CovParams& p, std::span<const double> values);

const char* family_name(CovFamily f);
CovFamily parse_family(const std::string& name);

}  // namespace qmgp

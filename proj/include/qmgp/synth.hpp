#pragma once

#include "qmgp/covariance.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <vector>

namespace qmgp {

enum class SynthSampler { Auto, Dense, Mgp };

struct SynthSpec {
  std::vector<int> grid{40, 40, 10};  // last axis is time for the space-time families
  CovParams theta = CovParams::gneiting(1.0, 5.0, 50.0, 0.5, LagArgument::Unsquared);
  double tau2 = 0.05;
  std::uint64_t seed = 1;

  SynthSampler sampler = SynthSampler::Auto;
  int dense_limit = 4000;   // Dense above this needs force_dense
  bool force_dense = false;
  std::vector<int> mgp_intervals;  // empty: about 32 locations per region

  // clouds
  int cloud_frames = 6;
  double cloud_radius = std::sqrt(0.1);
  int cloud_floor = 0;       // locations kept observed in a cloudy frame
  int blackout_frames = 2;
  int blackout_keep = 10;

  void validate() const;
};

// Univariate outcomes per variable: y(l) = w(l) + eps with Z = I.
struct SynthData {
  Eigen::MatrixXd coords;  // n x dim, grid values k / (n_axis - 1)
  Eigen::MatrixXd w;       // n x q
  Eigen::MatrixXd y;       // n x q
  std::vector<char> observed;  // n * q row-major
  std::vector<double> cloud_times;            // filled by apply_clouds
  std::vector<Eigen::VectorXd> cloud_centers;
  std::vector<double> blackout_times;
  int n() const { return static_cast<int>(coords.rows()); }
};

Eigen::MatrixXd grid_coords(const std::vector<int>& shape);

SynthData generate(const SynthSpec& spec);

// Masks disc-shaped clouds in `cloud_frames` random frames and all but
// `blackout_keep` locations in `blackout_frames` of the remaining frames.
// Only the observed flags change.
void apply_clouds(SynthData& data, const SynthSpec& spec);

struct GridCombo {
  double tau2, a1, beta1, c;
};
// The 3 x 3 x 3 x 3 sweep over noise, temporal range, separability and
// spatial range.
std::vector<GridCombo> parameter_sweep();

}  // namespace qmgp

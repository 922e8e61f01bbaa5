#pragma once

#include "qmgp/covariance.hpp"
#include "qmgp/linalg.hpp"
#include "qmgp/mesh.hpp"
#include "qmgp/tessellation.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <map>
#include <memory>
#include <vector>

namespace qmgp {

// Moments of w_{S_j} | w_[j] for a reference block.
struct RefMoments {
  Eigen::MatrixXd H;     // n_j q x |pa| q, empty for roots
  Factor R;              // Cholesky factor of R_j
  Eigen::MatrixXd Rinv;  // R_j^{-1}, formed from the factor
  Eigen::MatrixXd G;     // L^{-1} H
  std::vector<Eigen::MatrixXd> GtG;  // per parent slot: H_s' R^{-1} H_s
  double logdet = 0.0;
};

// Moments of the other locations of region j given pa(b_j). Locations are
// conditionally independent, so R is block diagonal with q x q blocks.
struct OtherMoments {
  Eigen::MatrixXd H;       // n_U q x |pa| q
  Eigen::MatrixXd L;       // n_U q x q, stacked lower factors of the q x q blocks
  Eigen::MatrixXd Rinv;    // n_U q x q, stacked inverses
  Eigen::MatrixXd G;       // blockwise L^{-1} H
  std::vector<Eigen::MatrixXd> GtG;
  double logdet = 0.0;
};

struct CacheStats {
  int blocks = 0;          // block moments requested
  int unique_blocks = 0;   // computed
  int parent_factors = 0;  // parent covariance factorizations computed
  double hit_rate() const {
    return blocks == 0 ? 0.0 : 1.0 - static_cast<double>(unique_blocks) / blocks;
  }
};

// Moments for one value of theta, stored per prototype.
struct MomentSet {
  std::vector<std::shared_ptr<const RefMoments>> ref;      // per region, null if no a_j
  std::vector<std::shared_ptr<const OtherMoments>> other;  // per region, null if no b_j
  CacheStats stats;
};

// Static structure of an MGP on a cubic mesh: region membership, parent
// location lists and prototype maps. Geometry never changes during a run, so
// everything here is computed once.
class MgpModel {
 public:
  MgpModel(RegionAssignment ra, AxisPartition part, MeshGraph mesh, int q, bool caching = true,
           double tol = 1e-8);

  const RegionAssignment& assignment() const { return ra_; }
  const AxisPartition& partition() const { return part_; }
  const MeshGraph& mesh() const { return mesh_; }
  int q() const { return q_; }
  bool caching() const { return caching_; }

  // Locations of S_p for each parent p of a_j (resp. b_j), concatenated in
  // parent order, and the starting offset of each slot in locations.
  const std::vector<int>& ref_parent_locs(int j) const { return ref_pa_locs_[j]; }
  const std::vector<int>& ref_parent_offsets(int j) const { return ref_pa_off_[j]; }
  const std::vector<int>& other_parent_locs(int j) const { return oth_pa_locs_[j]; }
  const std::vector<int>& other_parent_offsets(int j) const { return oth_pa_off_[j]; }

  // Slot of parent region p in the parent list of a_c (resp. b_c).
  int ref_slot(int c, int p) const;
  int other_slot(int c, int p) const;

  int n_ref_prototypes() const { return static_cast<int>(ref_rep_.size()); }
  int n_other_prototypes() const { return static_cast<int>(oth_rep_.size()); }
  int n_parent_prototypes() const { return static_cast<int>(pa_rep_.size()); }
  const std::vector<int>& ref_prototype_map() const { return ref_proto_; }

  MomentSet compute_moments(const CovParams& p) const;

  // Rebuild parent lists and prototypes after the mesh parents were edited.
  void set_mesh(MeshGraph mesh);

  // w is location-major with q entries per location, over all n_all locations.
  double log_density_reference(const Eigen::VectorXd& w, const MomentSet& m) const;
  double log_density_other(const Eigen::VectorXd& w, const MomentSet& m) const;

  // Location indices of S in precision order: regions by id, then block order.
  std::vector<int> reference_order() const;

  // (I - H)' R^{-1} (I - H) over S, in reference_order() with q entries each.
  Eigen::SparseMatrix<double> assemble_precision(const MomentSet& m) const;

  // Dense MGP covariance of w over the given locations (indices into the
  // assignment). Intended for small diagnostic problems.
  Eigen::MatrixXd dense_covariance(const std::vector<int>& locs, const MomentSet& m,
                                   const CovParams& p) const;

  // Parent regions used to condition an arbitrary location of region j.
  std::vector<int> prediction_parents(int region) const;

 private:
  void build_structure();
  Eigen::MatrixXd gather_coords(const std::vector<int>& idx) const;

  RegionAssignment ra_;
  AxisPartition part_;
  MeshGraph mesh_;
  int q_;
  bool caching_;
  double tol_;
  Eigen::MatrixXd unit_coords_;

  std::vector<std::vector<int>> ref_pa_locs_, ref_pa_off_, oth_pa_locs_, oth_pa_off_;
  // prototype maps: region -> prototype index, prototype -> representative region
  std::vector<int> ref_proto_, ref_rep_, oth_proto_, oth_rep_;
  // parent-factor prototypes, indexed over the concatenation [a_0..a_M, b_0..b_M]
  std::vector<int> pa_proto_, pa_rep_;
};

// Cross-covariance of the MGP between arbitrary locations, backed by the dense
// C~_S. Only meant for small problems (n_S <= a few hundred).
class MgpCrossCov {
 public:
  MgpCrossCov(const MgpModel& model, const CovParams& p);

  // q x q block Cov(w(l1), w(l2)).
  Eigen::MatrixXd operator()(const Eigen::VectorXd& l1, const Eigen::VectorXd& l2) const;

  const Eigen::MatrixXd& reference_cov() const { return CS_; }

 private:
  struct Conditional {
    std::vector<int> pa_pos;  // positions in reference order
    Eigen::MatrixXd H;        // q x |pa| q
    Eigen::MatrixXd R;        // q x q
  };
  int find_reference(const Eigen::VectorXd& l) const;
  Conditional conditional(const Eigen::VectorXd& l) const;

  const MgpModel& model_;
  CovParams p_;
  Eigen::MatrixXd CS_;
  std::map<std::vector<double>, int> ref_pos_;  // coordinates -> position in reference order
  std::vector<int> order_;
};

// KL(N(0, C) || N(0, C~)) over S, with C the base covariance.
double kl_from_dense(const MgpModel& model, const MomentSet& m, const CovParams& p);

// Gaussian log density of w over S under the base covariance (dense).
double dense_log_density(const Eigen::MatrixXd& C, const Eigen::VectorXd& x);

}  // namespace qmgp

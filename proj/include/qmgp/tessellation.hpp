#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace qmgp {

enum class BreakRule { EqualWidth, EqualCount };

// Cubic tessellation: breaks[r] holds L_r + 1 increasing values, the first and
// last being the data bounding box on axis r.
struct AxisPartition {
  std::vector<std::vector<double>> breaks;

  int dim() const { return static_cast<int>(breaks.size()); }
  std::vector<int> shape() const;
  int M() const;
};

AxisPartition build_partition(const Eigen::MatrixXd& locs, const std::vector<int>& intervals,
                              BreakRule rule = BreakRule::EqualWidth);

// 0-based multi-index. Intervals are [lo, hi) except the last, which is
// closed. Values within 1e-12 of the axis range below a break snap to it, and
// values outside the box are clamped.
std::vector<int> assign_region(std::span<const double> loc, const AxisPartition& part);

// Row-major flat id, axis 0 slowest.
int flat_index(const std::vector<int>& mi, const std::vector<int>& shape);
std::vector<int> multi_index(int id, const std::vector<int>& shape);

enum class ReferencePolicy {
  Observed,       // S = T
  Lattice,        // S = T*: fill the detected lattice
  CoverObserved,  // every location in a region with data is reference
};

// Per-axis unique values, when every axis is an equally spaced grid and the
// locations form a subset of the product lattice.
std::optional<std::vector<std::vector<double>>> detect_lattice(const Eigen::MatrixXd& locs,
                                                               double tol = 1e-9);

struct RegionAssignment {
  Eigen::MatrixXd coords;      // n_all x dim, original locations first
  int n_original = 0;          // rows of the input; later rows are lattice fill
  std::vector<char> observed;  // per location: some outcome observed
  std::vector<int> region;     // flat region id per location
  std::vector<char> reference; // per location: belongs to S
  std::vector<std::vector<int>> S;  // per region, sorted lexicographically
  std::vector<std::vector<int>> U;  // per region, sorted lexicographically
  std::vector<int> shape;

  int n_all() const { return static_cast<int>(coords.rows()); }
  int M() const { return static_cast<int>(S.size()); }
  int dim() const { return static_cast<int>(coords.cols()); }
};

RegionAssignment split_reference(const Eigen::MatrixXd& locs, const std::vector<char>& observed,
                                 const AxisPartition& part, ReferencePolicy policy);

// Lexicographic comparison of two coordinate rows.
bool lex_less(const Eigen::MatrixXd& coords, int a, int b);

struct PrototypeMaps {
  std::vector<int> proto_of;        // set index -> prototype index
  std::vector<int> representative;  // prototype index -> smallest member set index
  int count() const { return static_cast<int>(representative.size()); }
};

// Groups coordinate sets that coincide after sorting rows and subtracting the
// first row. `segments`, when given, lists the row counts of consecutive row
// groups; sorting then happens within each group only and the group sizes are
// part of the match, which keeps the row order aligned with cached moments.
// Coordinates are expected to be normalized so `tol` is scale-free.
PrototypeMaps detect_prototypes(const std::vector<Eigen::MatrixXd>& sets, double tol = 1e-8,
                                const std::vector<std::vector<int>>* segments = nullptr);

// Per-axis affine map of the coordinates onto [0, 1].
Eigen::MatrixXd normalize_unit(const Eigen::MatrixXd& coords);

}  // namespace qmgp

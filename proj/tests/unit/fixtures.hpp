#pragma once

#include "qmgp/mesh.hpp"
#include "qmgp/mgp_core.hpp"
#include "qmgp/tessellation.hpp"

#include <Eigen/Dense>

#include <random>
#include <vector>

namespace fixtures {

// Regular grid on [0,1]^d with `n[r]` points per axis, row-major.
inline Eigen::MatrixXd grid(const std::vector<int>& n) {
  int total = 1;
  for (int k : n) total *= k;
  Eigen::MatrixXd X(total, static_cast<Eigen::Index>(n.size()));
  for (int i = 0; i < total; ++i) {
    auto mi = qmgp::multi_index(i, n);
    for (std::size_t r = 0; r < n.size(); ++r)
      X(i, static_cast<Eigen::Index>(r)) = n[r] == 1 ? 0.0 : static_cast<double>(mi[r]) / (n[r] - 1);
  }
  return X;
}

inline Eigen::MatrixXd uniform_points(int n, int d, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd X(n, d);
  for (int i = 0; i < n; ++i)
    for (int r = 0; r < d; ++r) X(i, r) = u(rng);
  return X;
}

struct Built {
  qmgp::AxisPartition part;
  qmgp::RegionAssignment ra;
  qmgp::MeshGraph mesh;
};

inline Built build(const Eigen::MatrixXd& X, const std::vector<int>& intervals,
                   std::vector<char> observed = {},
                   qmgp::ReferencePolicy policy = qmgp::ReferencePolicy::Observed) {
  if (observed.empty()) observed.assign(static_cast<std::size_t>(X.rows()), 1);
  Built b;
  b.part = qmgp::build_partition(X, intervals);
  b.ra = qmgp::split_reference(X, observed, b.part, policy);
  std::vector<char> ne, ho;
  for (int j = 0; j < b.ra.M(); ++j) {
    ne.push_back(!b.ra.S[static_cast<std::size_t>(j)].empty());
    ho.push_back(!b.ra.U[static_cast<std::size_t>(j)].empty());
  }
  b.mesh = qmgp::build_cubic_mesh(b.part.shape(), ne, ho);
  return b;
}

inline qmgp::MgpModel model(const Built& b, int q, bool caching = true) {
  return qmgp::MgpModel(b.ra, b.part, b.mesh, q, caching);
}

}  // namespace fixtures

#include "qmgp/synth.hpp"

#include "qmgp/linalg.hpp"
#include "qmgp/mesh.hpp"
#include "qmgp/mgp_core.hpp"
#include "qmgp/rng.hpp"
#include "qmgp/tessellation.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <stdexcept>

namespace qmgp {

namespace {

Eigen::VectorXd normals(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> z;
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = z(rng);
  return v;
}

Eigen::VectorXd sample_dense(const Eigen::MatrixXd& X, const CovParams& p, std::uint64_t seed) {
  const Factor f = robust_cholesky(cov_matrix(X, p));
  auto rng = make_engine(seed, 0, Stream::Synth, 0);
  return f.L * normals(f.L.rows(), rng);
}

// Block-by-block along the DAG in id order, which is topological.
Eigen::VectorXd sample_mgp(const Eigen::MatrixXd& X, const SynthSpec& spec, int q) {
  std::vector<int> intervals = spec.mgp_intervals;
  if (intervals.empty()) {
    // about 32 locations per region, split evenly over the axes
    const double target = static_cast<double>(X.rows()) / 32.0;
    const double per_axis = std::pow(std::max(target, 1.0), 1.0 / static_cast<double>(spec.grid.size()));
    for (int g : spec.grid) intervals.push_back(std::clamp(static_cast<int>(std::lround(per_axis)), 1, g));
  }
  const AxisPartition part = build_partition(X, intervals);
  const std::vector<char> all(static_cast<std::size_t>(X.rows()), 1);
  RegionAssignment ra = split_reference(X, all, part, ReferencePolicy::Observed);
  std::vector<char> ne;
  for (int j = 0; j < ra.M(); ++j) ne.push_back(!ra.S[static_cast<std::size_t>(j)].empty());
  MeshGraph mesh = build_cubic_mesh(part.shape(), ne);
  const MgpModel model(std::move(ra), part, std::move(mesh), q);
  const MomentSet ms = model.compute_moments(spec.theta);
  const auto& S = model.assignment().S;

  Eigen::VectorXd w = Eigen::VectorXd::Zero(X.rows() * q);
  for (int j = 0; j < model.assignment().M(); ++j) {
    const auto js = static_cast<std::size_t>(j);
    if (S[js].empty()) continue;
    const auto& mo = *ms.ref[js];
    auto rng = make_engine(spec.seed, 0, Stream::Synth, static_cast<std::uint64_t>(j) + 1);
    Eigen::VectorXd wj = mo.R.L * normals(mo.R.L.rows(), rng);
    if (mo.H.cols() > 0) {
      const auto& pa = model.ref_parent_locs(j);
      Eigen::VectorXd wpa(static_cast<Eigen::Index>(pa.size()) * q);
      for (std::size_t i = 0; i < pa.size(); ++i)
        wpa.segment(static_cast<Eigen::Index>(i) * q, q) = w.segment(static_cast<Eigen::Index>(pa[i]) * q, q);
      wj += mo.H * wpa;
    }
    for (std::size_t a = 0; a < S[js].size(); ++a)
      w.segment(static_cast<Eigen::Index>(S[js][a]) * q, q) = wj.segment(static_cast<Eigen::Index>(a) * q, q);
  }
  return w;
}

}  // namespace

void SynthSpec::validate() const {
  if (grid.empty()) throw std::invalid_argument("synthetic grid needs at least one axis");
  for (int g : grid)
    if (g < 1) throw std::invalid_argument("grid sizes must be >= 1");
  theta.validate();
  if (!(tau2 >= 0) || !std::isfinite(tau2)) throw std::invalid_argument("tau2 must be >= 0");
  if (!mgp_intervals.empty() && mgp_intervals.size() != grid.size())
    throw std::invalid_argument("one MGP interval count per grid axis");
  if (cloud_frames < 0 || blackout_frames < 0 || blackout_keep < 0 || cloud_floor < 0 || !(cloud_radius >= 0))
    throw std::invalid_argument("cloud settings must be nonnegative");
}

Eigen::MatrixXd grid_coords(const std::vector<int>& shape) {
  int total = 1;
  for (int k : shape) total *= k;
  Eigen::MatrixXd X(total, static_cast<Eigen::Index>(shape.size()));
  for (int i = 0; i < total; ++i) {
    const auto mi = multi_index(i, shape);
    for (std::size_t r = 0; r < shape.size(); ++r)
      X(i, static_cast<Eigen::Index>(r)) = shape[r] == 1 ? 0.0 : static_cast<double>(mi[r]) / (shape[r] - 1);
  }
  return X;
}

SynthData generate(const SynthSpec& spec) {
  spec.validate();
  SynthData d;
  d.coords = grid_coords(spec.grid);
  const int n = d.n();
  const int q = spec.theta.q();
  SynthSampler how = spec.sampler;
  if (how == SynthSampler::Auto) how = n <= spec.dense_limit ? SynthSampler::Dense : SynthSampler::Mgp;
  if (how == SynthSampler::Dense && n > spec.dense_limit && !spec.force_dense)
    throw std::invalid_argument("dense sampling of " + std::to_string(n) +
                                " locations exceeds the limit; force it or use the MGP sampler");
  const Eigen::VectorXd w = how == SynthSampler::Dense ? sample_dense(d.coords, spec.theta, spec.seed)
                                                       : sample_mgp(d.coords, spec, q);
  d.w = Eigen::Map<const Eigen::MatrixXd>(w.data(), q, n).transpose();
  auto rng = make_engine(spec.seed, 1, Stream::Synth, 0);
  d.y = d.w + std::sqrt(spec.tau2) * Eigen::Map<const Eigen::MatrixXd>(normals(static_cast<Eigen::Index>(n) * q, rng).data(), n, q);
  if (spec.tau2 == 0.0) d.y = d.w;
  d.observed.assign(static_cast<std::size_t>(n) * static_cast<std::size_t>(q), 1);
  return d;
}

void apply_clouds(SynthData& data, const SynthSpec& spec) {
  spec.validate();
  const int dim = static_cast<int>(data.coords.cols());
  if (dim < 2) throw std::invalid_argument("clouds need at least one spatial axis and a time axis");
  const int q = static_cast<int>(data.y.cols());
  const int n = data.n();

  // frames are the distinct values of the last coordinate
  std::vector<double> times(data.coords.col(dim - 1).data(), data.coords.col(dim - 1).data() + n);
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  const int T = static_cast<int>(times.size());
  std::vector<std::vector<int>> frame(static_cast<std::size_t>(T));
  for (int i = 0; i < n; ++i) {
    const auto t = std::lower_bound(times.begin(), times.end(), data.coords(i, dim - 1)) - times.begin();
    frame[static_cast<std::size_t>(t)].push_back(i);
  }

  auto rng = make_engine(spec.seed, 2, Stream::Synth, 0);
  std::vector<int> order(static_cast<std::size_t>(T));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const int n_cloud = std::min(spec.cloud_frames, T);
  const int n_black = std::min(spec.blackout_frames, T - n_cloud);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  auto mask = [&](int i) {
    for (int r = 0; r < q; ++r) data.observed[static_cast<std::size_t>(i) * static_cast<std::size_t>(q) + r] = 0;
  };
  auto keep_some = [&](std::vector<int> locs, int keep) {
    std::shuffle(locs.begin(), locs.end(), rng);
    for (std::size_t a = static_cast<std::size_t>(std::min<int>(keep, static_cast<int>(locs.size())));
         a < locs.size(); ++a)
      mask(locs[a]);
  };

  for (int f = 0; f < n_cloud; ++f) {
    const auto& locs = frame[static_cast<std::size_t>(order[static_cast<std::size_t>(f)])];
    Eigen::VectorXd center(dim - 1);
    for (int a = 0; a < dim - 1; ++a) center(a) = unif(rng);
    data.cloud_times.push_back(times[static_cast<std::size_t>(order[static_cast<std::size_t>(f)])]);
    data.cloud_centers.push_back(center);
    std::vector<int> covered, clear;
    for (int i : locs) {
      const double d2 = (data.coords.row(i).head(dim - 1).transpose() - center).squaredNorm();
      (d2 <= spec.cloud_radius * spec.cloud_radius ? covered : clear).push_back(i);
    }
    const int short_by = spec.cloud_floor - static_cast<int>(clear.size());
    keep_some(covered, std::max(short_by, 0));
  }
  for (int f = n_cloud; f < n_cloud + n_black; ++f) {
    const auto t = static_cast<std::size_t>(order[static_cast<std::size_t>(f)]);
    data.blackout_times.push_back(times[t]);
    keep_some(frame[t], spec.blackout_keep);
  }
}

std::vector<GridCombo> parameter_sweep() {
  std::vector<GridCombo> out;
  for (double tau2 : {1.0 / 1000, 1.0 / 20, 1.0 / 10})
    for (double a1 : {5.0, 50.0, 500.0})
      for (double beta1 : {1.0 / 20, 1.0 / 2, 19.0 / 20})
        for (double c : {1.0, 5.0, 25.0}) out.push_back({tau2, a1, beta1, c});
  return out;
}

}  // namespace qmgp

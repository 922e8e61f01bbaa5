#include "qmgp/bench.hpp"

#include "qmgp/gibbs.hpp"
#include "qmgp/mesh.hpp"
#include "qmgp/mgp_core.hpp"
#include "qmgp/synth.hpp"
#include "qmgp/tessellation.hpp"

#include <algorithm>
#include <limits>

namespace qmgp {

namespace {

struct Problem {
  Dataset data;
  AxisPartition part;
  RegionAssignment ra;
  MeshGraph mesh;
  CovParams theta;
};

Problem make_problem(const std::vector<int>& grid, const std::vector<int>& intervals, std::uint64_t seed) {
  SynthSpec spec;
  spec.grid = grid;
  spec.theta = grid.size() >= 3 ? CovParams::gneiting(1.0, 5.0, 50.0, 0.5, LagArgument::Unsquared)
                                : CovParams::exponential(1.0, 5.0);
  spec.tau2 = 0.05;
  spec.seed = seed;
  spec.sampler = SynthSampler::Mgp;
  spec.mgp_intervals = intervals;
  const SynthData s = generate(spec);
  Problem p;
  p.theta = spec.theta;
  p.data.coords = s.coords;
  p.data.y = s.y;
  p.part = build_partition(s.coords, intervals);
  p.ra = split_reference(s.coords, std::vector<char>(static_cast<std::size_t>(s.n()), 1), p.part,
                         ReferencePolicy::Lattice);
  std::vector<char> ne, ho;
  for (int j = 0; j < p.ra.M(); ++j) {
    ne.push_back(!p.ra.S[static_cast<std::size_t>(j)].empty());
    ho.push_back(!p.ra.U[static_cast<std::size_t>(j)].empty());
  }
  p.mesh = build_cubic_mesh(p.part.shape(), ne, ho);
  return p;
}

ChainResult run_chain(const Problem& p, const MgpModel& m, int iters, std::uint64_t seed) {
  std::vector<ThetaPrior> tp;
  for (const auto& name : parameter_names(p.theta))
    tp.push_back(name == "sigma2" ? ThetaPrior::inv_gamma(2, 1)
                 : name == "beta1" ? ThetaPrior::uniform(0, 1)
                                   : ThetaPrior::uniform(0, 1e4));
  McmcConfig cfg;
  cfg.n_iter = iters;
  cfg.n_burn = 0;
  cfg.seed = seed;
  cfg.reservoir = 1;
  return GibbsSampler(p.data, m, PriorSpec::defaults(0, 1, tp), p.theta, cfg).run();
}

}  // namespace

CachingBench bench_caching(const std::vector<int>& grid, const std::vector<int>& intervals, int iters,
                           std::uint64_t seed) {
  const Problem p = make_problem(grid, intervals, seed);
  const MgpModel cached(p.ra, p.part, p.mesh, 1, true);
  const MgpModel plain(p.ra, p.part, p.mesh, 1, false);
  CachingBench b;
  b.n = p.data.n();
  const MomentSet ms = cached.compute_moments(p.theta);
  b.blocks = ms.stats.blocks;
  b.unique_blocks = ms.stats.unique_blocks;
  b.parent_prototypes = ms.stats.parent_factors;
  const ChainResult rc = run_chain(p, cached, iters, seed);
  const ChainResult ru = run_chain(p, plain, iters, seed);
  b.sec_cached = rc.seconds_per_iter;
  b.sec_uncached = ru.seconds_per_iter;
  b.max_trace_diff = (rc.trace - ru.trace).cwiseAbs().maxCoeff();
  b.max_w_diff = (rc.final_state.w - ru.final_state.w).cwiseAbs().maxCoeff();
  return b;
}

std::vector<ScalingPoint> bench_scaling(int base, int block, int doublings, int iters, int repeats,
                                        std::uint64_t seed) {
  std::vector<ScalingPoint> out;
  for (int k = 0; k <= doublings; ++k) {
    const int wide = base << k;
    const std::vector<int> grid{base, wide};
    const std::vector<int> intervals{std::max(1, base / block), std::max(1, wide / block)};
    const Problem p = make_problem(grid, intervals, seed);
    const MgpModel m(p.ra, p.part, p.mesh, 1, true);
    ScalingPoint pt;
    pt.n = p.data.n();
    pt.M = p.ra.M();
    pt.sec_per_iter = std::numeric_limits<double>::infinity();
    for (int r = 0; r < repeats; ++r)
      pt.sec_per_iter = std::min(pt.sec_per_iter, run_chain(p, m, iters, seed).seconds_per_iter);
    out.push_back(pt);
  }
  return out;
}

}  // namespace qmgp

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace qmgp {

struct CachingBench {
  int n = 0;
  int blocks = 0;
  int unique_blocks = 0;
  int parent_prototypes = 0;
  double sec_cached = 0.0;    // per iteration
  double sec_uncached = 0.0;
  double max_trace_diff = 0.0;  // cached vs uncached chains
  double max_w_diff = 0.0;
  double ratio() const { return sec_uncached / sec_cached; }
};

// Fits the same seeded chain with caching on and off on a full lattice.
CachingBench bench_caching(const std::vector<int>& grid, const std::vector<int>& intervals, int iters,
                           std::uint64_t seed = 1);

struct ScalingPoint {
  int n = 0;
  int M = 0;
  double sec_per_iter = 0.0;
};

// Per-iteration time on 2D grids of `base` x (base * 2^k) locations with
// blocks of `block` x `block` locations, k = 0..doublings. Each size is timed
// `repeats` times and the fastest run kept.
std::vector<ScalingPoint> bench_scaling(int base, int block, int doublings, int iters, int repeats = 3,
                                        std::uint64_t seed = 1);

}  // namespace qmgp

#pragma once

#include <cstdint>
#include <random>

namespace qmgp {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent substreams for the sampler. Each (seed, iteration, stream,
// block) tuple gets its own engine, so results do not depend on which thread
// handles a block or in what order.
enum class Stream : std::uint64_t {
  Theta = 1,
  WReference = 2,
  WOther = 3,
  Beta = 4,
  Tau = 5,
  Predict = 6,
  Reservoir = 7,
  Synth = 8,
};

inline std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t iteration, Stream stream,
                                    std::uint64_t block) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ iteration);
  h = splitmix64(h ^ static_cast<std::uint64_t>(stream));
  return splitmix64(h ^ block);
}

inline std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t iteration, Stream stream,
                                   std::uint64_t block) {
  return std::mt19937_64(substream_seed(seed, iteration, stream, block));
}

}  // namespace qmgp

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <limits>

namespace mkv {

// SplitMix64 finalizer. mix64(0) == 0.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Particle index reserved for the common-noise path of a scenario.
inline constexpr std::uint64_t kCommonStream = std::numeric_limits<std::uint64_t>::max();

// Independent draws attached to the same (scenario, particle) pair.
enum class Lane : std::uint64_t {
  brownian = 0,
  initial = 1,
  auxiliary = 2,
  resample = 3,
};

// mix64(mix64(master ^ mix64(scenario)) ^ mix64(particle + 1)).
std::uint64_t stream_seed(std::uint64_t master, std::uint64_t scenario_index,
                          std::uint64_t particle_index);
std::uint64_t lane_seed(std::uint64_t base, Lane lane, std::uint64_t salt = 0);

// Sequential SplitMix64 stream with Box-Muller normals. Satisfies
// UniformRandomBitGenerator so it can feed <random> distributions, but the
// normal() path is used for everything that must be bit-reproducible across
// standard libraries.
class RandomStream {
 public:
  using result_type = std::uint64_t;

  RandomStream() = default;
  explicit RandomStream(std::uint64_t seed) : state_(seed) {}

  static RandomStream for_particle(std::uint64_t master, std::uint64_t scenario_index,
                                   std::uint64_t particle_index, Lane lane,
                                   std::uint64_t salt = 0);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix64(state_);
  }

  // Uniform on the open interval (0, 1).
  double uniform() { return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  std::uint64_t below(std::uint64_t n);

 private:
  std::uint64_t state_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace mkv

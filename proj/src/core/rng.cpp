// SPDX-License-Identifier: Apache-2.0
#include "mkv/rng.h"

#include <cmath>
#include <numbers>

namespace mkv {

std::uint64_t stream_seed(std::uint64_t master, std::uint64_t scenario_index,
                          std::uint64_t particle_index) {
  // The flat form mix64(master ^ mix64(s) ^ mix64(p + 1)) is symmetric under
  // (s, p) <-> (p + 1, s - 1) and hands one stream to two particles in
  // different scenarios; hashing the scenario part first breaks the symmetry.
  return mix64(mix64(master ^ mix64(scenario_index)) ^ mix64(particle_index + 1));
}

std::uint64_t lane_seed(std::uint64_t base, Lane lane, std::uint64_t salt) {
  const auto l = static_cast<std::uint64_t>(lane);
  if (l == 0 && salt == 0) return base;
  return mix64(base ^ mix64(l * 0xd1b54a32d192ed03ULL + salt * 0x8cb92ba72f3d8dd7ULL + 1));
}

RandomStream RandomStream::for_particle(std::uint64_t master, std::uint64_t scenario_index,
                                        std::uint64_t particle_index, Lane lane,
                                        std::uint64_t salt) {
  return RandomStream(lane_seed(stream_seed(master, scenario_index, particle_index), lane, salt));
}

double RandomStream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

std::uint64_t RandomStream::below(std::uint64_t n) {
  // Lemire's multiply-shift; the tiny bias is irrelevant at our sizes.
  return static_cast<std::uint64_t>((static_cast<unsigned __int128>((*this)()) * n) >> 64);
}

}  // namespace mkv

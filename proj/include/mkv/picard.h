// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "mkv/particles.h"

namespace mkv {

struct PicardOptions {
  double tolerance = 1e-8;
  std::size_t max_iter = 60;
  double p = 2.0;  // gap is the particle mean of sup_k |X^{n}_k - X^{n-1}_k|^p
  std::uint64_t particle_salt = 0;
};

struct PicardResult {
  std::vector<double> gaps;    // gaps[n-1] = Delta_n, n = 1, 2, ...
  std::vector<double> ratios;  // Delta_n / Delta_{n-1}, n >= 2
  bool converged = false;
  std::size_t iterations = 0;
  ParticleEnsemble limit;  // last iterate, all nodes recorded
};

// Fixed-point iteration on whole paths with frozen noise:
//   X^{n}_{k+1} = X^{n}_k + b(t_k, mu^{n-1}_k, X^{n-1}_k) dt + sigma(.) dW_k + gamma(.) dB_k,
// X^0 = X_0 on every node. The noise, the initial draws and any auxiliary
// inputs are the ones simulate_mckv uses, so the limit is its Euler path.
PicardResult picard_solve(const CoefficientField& field, const InitialLaw& init,
                          ScenarioPtr scenario, std::size_t n_particles,
                          const PicardOptions& options = {});

}  // namespace mkv

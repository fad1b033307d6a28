// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <vector>

#include "mkv/coefficients.h"
#include "mkv/initial_law.h"

namespace mkv {

// Named one-dimensional benchmark systems.
//   zero          b = sigma = gamma = 0
//   ou            b = -kappa x, sigma, gamma
//   transport     b = sigma = 0, gamma
//   heat          b = gamma = 0, sigma
//   affine_mean   b = -kappa x + coupling mean(mu), sigma, gamma
//   random_drift  b = -kappa x + xi_sd xi, xi ~ N(0,1) fresh per step, sigma, gamma
// Every family also takes init_mean and init_sd (0 = point mass).
struct SystemSpec {
  std::string family;
  FieldPtr field;
  InitialLaw init = InitialLaw::point_mass({0.0});
  double gamma = 0.0;
  bool markovian = true;  // coefficients are functions of (t, x, mu) only
};

const std::vector<std::string>& system_families();
// Parameter names accepted by a family, including the initial-law keys.
std::vector<std::string> family_parameters(const std::string& family);
// Throws std::invalid_argument on an unknown family or parameter.
SystemSpec make_system(const std::string& family, const std::map<std::string, double>& params);

}  // namespace mkv

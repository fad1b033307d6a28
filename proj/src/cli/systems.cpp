// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <stdexcept>

#include "mkv/systems.h"

namespace mkv {

const std::vector<std::string>& system_families() {
  static const std::vector<std::string> f{"zero", "ou", "transport", "heat", "affine_mean", "random_drift"};
  return f;
}

std::vector<std::string> family_parameters(const std::string& family) {
  std::vector<std::string> p;
  if (family == "ou") p = {"kappa", "sigma", "gamma"};
  else if (family == "transport") p = {"gamma"};
  else if (family == "heat") p = {"sigma"};
  else if (family == "affine_mean") p = {"kappa", "coupling", "sigma", "gamma"};
  else if (family == "random_drift") p = {"kappa", "xi_sd", "sigma", "gamma"};
  else if (family != "zero") throw std::invalid_argument("unknown system family '" + family + "'");
  p.push_back("init_mean");
  p.push_back("init_sd");
  return p;
}

SystemSpec make_system(const std::string& family, const std::map<std::string, double>& params) {
  const auto allowed = family_parameters(family);
  for (const auto& [k, v] : params)
    if (std::find(allowed.begin(), allowed.end(), k) == allowed.end())
      throw std::invalid_argument("family '" + family + "' has no parameter '" + k + "'");
  auto get = [&](const std::string& k, double fallback) {
    auto it = params.find(k);
    return it == params.end() ? fallback : it->second;
  };

  SystemSpec s;
  s.family = family;
  const double m0 = get("init_mean", 0.0), sd0 = get("init_sd", 0.0);
  if (sd0 < 0.0) throw std::invalid_argument("init_sd must be non-negative");
  s.init = sd0 > 0.0 ? InitialLaw::gaussian({m0}, {sd0}) : InitialLaw::point_mass({m0});

  if (family == "zero") {
    s.field = constant_field(0.0, 0.0, 0.0);
  } else if (family == "ou") {
    s.gamma = get("gamma", 1.0);
    s.field = AffineMeanField::isotropic(1, get("kappa", 1.0), 0.0, get("sigma", 1.0), s.gamma);
  } else if (family == "transport") {
    s.gamma = get("gamma", 1.0);
    s.field = constant_field(0.0, 0.0, s.gamma);
  } else if (family == "heat") {
    s.field = constant_field(0.0, get("sigma", 1.0), 0.0);
  } else if (family == "affine_mean") {
    s.gamma = get("gamma", 0.7);
    s.field = AffineMeanField::isotropic(1, get("kappa", 1.0), get("coupling", 0.5), get("sigma", 0.5), s.gamma);
  } else {
    const double kappa = get("kappa", 1.0), xi = get("xi_sd", 1.0), sig = get("sigma", 1.0);
    s.gamma = get("gamma", 1.0);
    const double g = s.gamma;
    auto f = std::make_shared<CompositeField>(
        1,
        [kappa, xi](const EvalContext& c, std::span<const double> x, std::span<double> o) {
          o[0] = -kappa * x[0] + (c.aux.empty() ? 0.0 : xi * c.aux[0]);
        },
        [sig](const EvalContext&, std::span<const double>, std::span<double> o) { o[0] = sig; },
        [g](const EvalContext&, std::span<const double>, std::span<double> o) { o[0] = g; });
    f->label = "random_drift";
    f->n_aux = 1;
    s.field = f;
    s.markovian = false;
  }
  return s;
}

}  // namespace mkv

// SPDX-License-Identifier: Apache-2.0
#include <nlohmann/json.hpp>
#include <sstream>

#include "mkv/checked_io.h"
#include "mkv/particles.h"

namespace mkv {

void write_ensemble_csv(const std::vector<ParticleEnsemble>& ensembles, const std::string& path) {
  std::ostringstream os;
  if (ensembles.empty()) throw std::invalid_argument("no ensembles to export");
  const std::size_t d = ensembles.front().dim();
  os << "scenario_index,time_index,particle_index";
  for (std::size_t j = 0; j < d; ++j) os << ",x_" << j + 1;
  os << '\n';
  for (const auto& e : ensembles)
    for (std::size_t s = 0; s < e.n_slots(); ++s)
      for (std::size_t i = 0; i < e.n_particles(); ++i) {
        os << e.scenario().index() << ',' << e.time_index(s) << ',' << i;
        for (double v : e.state(s, i)) os << ',' << exact(v);
        os << '\n';
      }
  write_checked(path, os.str());
}

std::string ensemble_summary_json(const std::vector<ParticleEnsemble>& ensembles) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& e : ensembles) {
    const auto m = node_moments(e);
    out.push_back({{"scenario_index", e.scenario().index()},
                   {"seed", e.scenario().seed()},
                   {"n_particles", e.n_particles()},
                   {"time", m.times},
                   {"conditional_mean", m.mean},
                   {"conditional_variance", m.variance}});
  }
  return out.dump(2);
}

}  // namespace mkv

// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>

#include "mkv/checked_io.h"
#include "mkv/fpe.h"

namespace mkv {

ScenarioEnsembleSummary::ScenarioEnsembleSummary(std::vector<ParticleEnsemble> ensembles, TestBasis basis)
    : ensembles_(std::move(ensembles)), basis_(std::move(basis)) {
  if (ensembles_.size() < 2) throw std::invalid_argument("a scenario summary needs at least two scenarios");
  const auto& first = ensembles_.front();
  if (basis_.dim() != first.dim()) throw std::invalid_argument("basis dimension differs from the ensembles");
  for (const auto& e : ensembles_) {
    if (e.time_indices() != first.time_indices() || e.dim() != first.dim() ||
        !(e.scenario().grid() == first.scenario().grid()))
      throw std::invalid_argument("scenario ensembles must share grid, dimension and recorded nodes");
  }
  const std::size_t S = ensembles_.size(), L = n_slots(), K = basis_.size();
  features_.resize(S * L * K);
  moments_.resize(S * L * 4);
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t l = 0; l < L; ++l) {
      const auto m = ensembles_[s].measure(l);
      for (std::size_t k = 0; k < K; ++k) {
        const double v = m.pair(basis_[k]);
        if (!std::isfinite(v))
          throw std::domain_error(fmt::format("non-finite feature {} at scenario {} slot {}", k, s, l));
        features_[(s * L + l) * K + k] = v;
      }
      for (unsigned o = 1; o <= 4; ++o) moments_[(s * L + l) * 4 + (o - 1)] = m.moment(o);
    }
}

std::vector<double> ScenarioEnsembleSummary::feature_vector(std::size_t s, std::size_t slot) const {
  const std::size_t K = basis_.size();
  const auto it = features_.begin() + static_cast<std::ptrdiff_t>((s * n_slots() + slot) * K);
  return {it, it + static_cast<std::ptrdiff_t>(K)};
}

std::vector<double> lift(const MeasureView& m, const TestBasis& basis) {
  std::vector<double> z(basis.size());
  for (std::size_t k = 0; k < basis.size(); ++k) z[k] = m.pair(basis[k]);
  return z;
}

void write_features_csv(const ScenarioEnsembleSummary& summary, const std::string& path) {
  std::ostringstream os;
  os << "scenario_index,time_index,phi_index,value\n";
  for (std::size_t s = 0; s < summary.n_scenarios(); ++s) {
    const auto idx = summary.ensemble(s).scenario().index();
    for (std::size_t l = 0; l < summary.n_slots(); ++l)
      for (std::size_t k = 0; k < summary.basis().size(); ++k)
        os << idx << ',' << summary.time_indices()[l] << ',' << k << ',' << exact(summary.feature(s, l, k))
           << '\n';
  }
  write_checked(path, os.str());
}

}  // namespace mkv

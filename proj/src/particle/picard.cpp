// SPDX-License-Identifier: Apache-2.0
#include "mkv/picard.h"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "mkv/rng.h"

namespace mkv {

PicardResult picard_solve(const CoefficientField& field, const InitialLaw& init,
                          ScenarioPtr scenario, std::size_t n_particles,
                          const PicardOptions& options) {
  if (!scenario) throw std::invalid_argument("picard_solve needs a scenario");
  if (!(options.tolerance > 0.0) || options.max_iter == 0)
    throw std::invalid_argument("picard_solve needs tolerance > 0 and max_iter >= 1");
  const std::size_t d = field.dim();
  if (init.dim() != d || scenario->dim() != d) throw std::invalid_argument("dimension mismatch");
  const Scenario& sc = *scenario;
  const std::size_t n_steps = sc.grid().n_steps();
  const std::size_t nodes = n_steps + 1;
  const double dt = sc.grid().dt();
  const double sdt = std::sqrt(dt);
  const std::size_t n_aux = field.aux_dim();
  const bool track_w = field.needs_own_path();
  const std::size_t N = n_particles;

  // Frozen inputs, drawn exactly as the forward engine draws them.
  std::vector<double> x0(N * d), dw(n_steps * N * d), aux(nodes * N * n_aux);
  for (std::size_t i = 0; i < N; ++i) {
    auto init_rng = RandomStream::for_particle(sc.seed(), sc.index(), i, Lane::initial, options.particle_salt);
    init.sample(init_rng, std::span<double>(x0.data() + i * d, d));
  }
  {
    std::vector<RandomStream> w_rng(N), aux_rng(n_aux ? N : 0);
    for (std::size_t i = 0; i < N; ++i) {
      w_rng[i] = RandomStream::for_particle(sc.seed(), sc.index(), i, Lane::brownian, options.particle_salt);
      if (n_aux)
        aux_rng[i] = RandomStream::for_particle(sc.seed(), sc.index(), i, Lane::auxiliary, options.particle_salt);
    }
    for (std::size_t k = 0; k < nodes; ++k) {
      for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < n_aux; ++j) aux[(k * N + i) * n_aux + j] = aux_rng[i].normal();
      if (k == n_steps) break;
      for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < d; ++j) dw[(k * N + i) * d + j] = sdt * w_rng[i].normal();
    }
  }
  std::vector<double> wpath(track_w ? nodes * N * d : 0, 0.0);
  if (track_w)
    for (std::size_t k = 0; k < n_steps; ++k)
      for (std::size_t q = 0; q < N * d; ++q) wpath[(k + 1) * N * d + q] = wpath[k * N * d + q] + dw[k * N * d + q];

  std::vector<double> prev(nodes * N * d), next(nodes * N * d);
  for (std::size_t k = 0; k < nodes; ++k)
    std::copy(x0.begin(), x0.end(), prev.begin() + static_cast<std::ptrdiff_t>(k * N * d));

  PicardResult result{{}, {}, false, 0,
                      ParticleEnsemble(scenario, N, d, recorded_indices(n_steps, 1))};
  std::vector<double> b(d), s(d * d), g(d * d);
  for (std::size_t it = 1; it <= options.max_iter; ++it) {
    std::copy(x0.begin(), x0.end(), next.begin());
    for (std::size_t k = 0; k < n_steps; ++k) {
      const std::span<const double> layer(prev.data() + k * N * d, N * d);
      const MeasureView view = MeasureView::atoms(layer, d);
      EvalContext c;
      c.t = sc.grid().time(k);
      c.step = k;
      c.measure = &view;
      c.scenario = &sc;
      const auto cache = field.prepare(c);
      c.cache = cache.get();
      const auto dB = sc.increment(k);
      for (std::size_t i = 0; i < N; ++i) {
        const std::span<const double> x(layer.data() + i * d, d);
        c.particle = i;
        if (n_aux) c.aux = std::span<const double>(aux.data() + (k * N + i) * n_aux, n_aux);
        if (track_w) c.own_w = std::span<const double>(wpath.data() + (k * N + i) * d, d);
        field.drift(c, x, b);
        field.sigma(c, x, s);
        field.gamma(c, x, g);
        const double* w = dw.data() + (k * N + i) * d;
        for (std::size_t r = 0; r < d; ++r) {
          double v = next[(k * N + i) * d + r] + b[r] * dt;
          for (std::size_t q = 0; q < d; ++q) v += s[r * d + q] * w[q] + g[r * d + q] * dB[q];
          if (!std::isfinite(v)) throw SimulationError(k, "state", "non-finite Picard iterate");
          next[((k + 1) * N + i) * d + r] = v;
        }
      }
    }
    double gap = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      double sup = 0.0;
      for (std::size_t k = 0; k < nodes; ++k) {
        double r2 = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          const double e = next[(k * N + i) * d + j] - prev[(k * N + i) * d + j];
          r2 += e * e;
        }
        sup = std::max(sup, std::sqrt(r2));
      }
      gap += std::pow(sup, options.p);
    }
    gap /= static_cast<double>(N);
    if (!result.gaps.empty())
      result.ratios.push_back(result.gaps.back() > 0.0 ? gap / result.gaps.back() : 0.0);
    result.gaps.push_back(gap);
    result.iterations = it;
    prev.swap(next);
    if (gap < options.tolerance) {
      result.converged = true;
      break;
    }
  }
  for (std::size_t k = 0; k < nodes; ++k)
    std::copy(prev.begin() + static_cast<std::ptrdiff_t>(k * N * d),
              prev.begin() + static_cast<std::ptrdiff_t>((k + 1) * N * d),
              result.limit.states_mut(k).begin());
  return result;
}

}  // namespace mkv

// SPDX-License-Identifier: Apache-2.0
#include "mkv/particles.h"

#include <algorithm>
#include <optional>
#include <cmath>
#include <fmt/format.h>

#include "mkv/parallel.h"
#include "mkv/rng.h"

namespace mkv {

ParticleEnsemble::ParticleEnsemble(ScenarioPtr scenario, std::size_t n_particles, std::size_t dim,
                                   std::vector<std::size_t> time_indices)
    : scenario_(std::move(scenario)), n_(n_particles), d_(dim), time_indices_(std::move(time_indices)) {
  if (!scenario_) throw std::invalid_argument("ensemble needs a scenario");
  if (n_ == 0) throw std::invalid_argument("ensemble needs at least one particle");
  x_.assign(time_indices_.size() * n_ * d_, 0.0);
}

std::size_t ParticleEnsemble::slot_of(std::size_t time_index) const {
  const auto it = std::lower_bound(time_indices_.begin(), time_indices_.end(), time_index);
  if (it == time_indices_.end() || *it != time_index)
    throw std::out_of_range("time index " + std::to_string(time_index) + " was not recorded");
  return static_cast<std::size_t>(it - time_indices_.begin());
}

bool ParticleEnsemble::has_time_index(std::size_t time_index) const {
  return std::binary_search(time_indices_.begin(), time_indices_.end(), time_index);
}

std::vector<std::size_t> recorded_indices(std::size_t n_steps, std::size_t stride) {
  if (stride == 0) stride = 1;
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < n_steps; k += stride) out.push_back(k);
  out.push_back(n_steps);
  return out;
}

namespace {

void require_finite(std::span<const double> v, std::size_t step, const char* what,
                    std::size_t particle) {
  for (double x : v)
    if (!std::isfinite(x))
      throw SimulationError(step, what,
                            fmt::format("non-finite {} at step {} (particle {})", what, step, particle));
}

}  // namespace

ParticleEnsemble simulate_mckv(const CoefficientField& field, const InitialLaw& init,
                               ScenarioPtr scenario, std::size_t n_particles,
                               const SimulationOptions& options, const StepObserver& observer) {
  if (!scenario) throw std::invalid_argument("simulation needs a scenario");
  const std::size_t d = field.dim();
  if (init.dim() != d) throw std::invalid_argument("initial law dimension differs from field");
  if (scenario->dim() != d) throw std::invalid_argument("scenario dimension differs from field");
  if (n_particles == 0) throw std::invalid_argument("empty ensemble");
  const Scenario& sc = *scenario;
  const TimeGrid& grid = sc.grid();
  const std::size_t n_steps = grid.n_steps();
  const double dt = grid.dt();
  const double sdt = std::sqrt(dt);
  const std::size_t n_aux = field.aux_dim();
  const bool track_w = options.keep_noise || field.needs_own_path();
  const std::size_t workers = options.workers ? options.workers : default_workers();

  ParticleEnsemble ens(scenario, n_particles, d, recorded_indices(n_steps, options.record_stride));
  if (options.keep_noise) ens.enable_noise();

  std::vector<RandomStream> w_rng(n_particles), aux_rng(n_aux ? n_particles : 0);
  std::vector<double> cur(n_particles * d), next(n_particles * d);
  std::vector<double> own_w(track_w ? n_particles * d : 0, 0.0);
  std::vector<double> aux(n_particles * n_aux, 0.0);
  for (std::size_t i = 0; i < n_particles; ++i) {
    auto init_rng = RandomStream::for_particle(sc.seed(), sc.index(), i, Lane::initial,
                                               options.particle_salt);
    init.sample(init_rng, std::span<double>(cur.data() + i * d, d));
    w_rng[i] = RandomStream::for_particle(sc.seed(), sc.index(), i, Lane::brownian,
                                          options.particle_salt);
    if (n_aux)
      aux_rng[i] = RandomStream::for_particle(sc.seed(), sc.index(), i, Lane::auxiliary,
                                              options.particle_salt);
  }
  require_finite(cur, 0, "initial state", 0);

  std::size_t slot = 0;
  auto record = [&](std::size_t k) {
    if (slot < ens.n_slots() && ens.time_index(slot) == k) {
      std::copy(cur.begin(), cur.end(), ens.states_mut(slot).begin());
      if (options.keep_noise) std::copy(own_w.begin(), own_w.end(), ens.w_mut(slot).begin());
      ++slot;
    }
  };

  for (std::size_t k = 0; k <= n_steps; ++k) {
    record(k);
    const MeasureView view = MeasureView::atoms(cur, d);
    EvalContext base;
    base.t = grid.time(k);
    base.step = k;
    base.measure = &view;
    base.scenario = &sc;
    const auto cache = field.prepare(base);
    base.cache = cache.get();
    if (n_aux)
      for (std::size_t i = 0; i < n_particles; ++i)
        for (std::size_t j = 0; j < n_aux; ++j) aux[i * n_aux + j] = aux_rng[i].normal();
    if (observer) {
      StepFrame frame{k, base.t, sc, view, cur, aux, own_w, base.cache, n_particles, d, n_aux};
      observer(frame);
    }
    if (k == n_steps) break;

    const auto dB = sc.increment(k);
    parallel_chunks(n_particles, workers, [&](std::size_t begin, std::size_t end) {
      std::vector<double> b(d), s(d * d), g(d * d), dw(d);
      EvalContext c = base;
      for (std::size_t i = begin; i < end; ++i) {
        const std::span<const double> x(cur.data() + i * d, d);
        c.particle = i;
        if (track_w) c.own_w = std::span<const double>(own_w.data() + i * d, d);
        if (n_aux) c.aux = std::span<const double>(aux.data() + i * n_aux, n_aux);
        field.drift(c, x, b);
        require_finite(b, k, "drift", i);
        field.sigma(c, x, s);
        require_finite(s, k, "sigma", i);
        field.gamma(c, x, g);
        require_finite(g, k, "gamma", i);
        if (options.wiring == NoiseWiring::shared_with_common)
          for (std::size_t j = 0; j < d; ++j) dw[j] = dB[j];
        else
          for (std::size_t j = 0; j < d; ++j) dw[j] = sdt * w_rng[i].normal();
        for (std::size_t r = 0; r < d; ++r) {
          double v = x[r] + b[r] * dt;
          for (std::size_t q = 0; q < d; ++q) v += s[r * d + q] * dw[q] + g[r * d + q] * dB[q];
          next[i * d + r] = v;
        }
        require_finite(std::span<const double>(next.data() + i * d, d), k, "state", i);
        if (track_w)
          for (std::size_t j = 0; j < d; ++j) own_w[i * d + j] += dw[j];
      }
    });
    cur.swap(next);
  }
  return ens;
}

ParticleEnsemble simulate_random_coeff(const CoefficientField& field, const InitialLaw& init,
                                       ScenarioPtr scenario, std::size_t n_particles,
                                       const SimulationOptions& options,
                                       const StepObserver& observer) {
  return simulate_mckv(field, init, std::move(scenario), n_particles, options, observer);
}

std::vector<ParticleEnsemble> simulate_scenarios(const CoefficientField& field,
                                                 const InitialLaw& init,
                                                 const std::vector<ScenarioPtr>& scenarios,
                                                 std::size_t n_particles,
                                                 const SimulationOptions& options) {
  const std::size_t workers = options.workers ? options.workers : default_workers();
  std::vector<std::optional<ParticleEnsemble>> slots(scenarios.size());
  SimulationOptions inner = options;
  inner.workers = 1;
  parallel_for(scenarios.size(), workers, [&](std::size_t m) {
    slots[m].emplace(simulate_mckv(field, init, scenarios[m], n_particles, inner));
  });
  std::vector<ParticleEnsemble> out;
  out.reserve(scenarios.size());
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

EmpiricalMeasure empirical_from_particles(const ParticleEnsemble& ensemble, std::size_t time_index) {
  const auto x = ensemble.states(ensemble.slot_of(time_index));
  return EmpiricalMeasure(std::vector<double>(x.begin(), x.end()), ensemble.dim());
}

NodeMoments node_moments(const ParticleEnsemble& ensemble) {
  NodeMoments m;
  const std::size_t n = ensemble.n_particles(), d = ensemble.dim();
  for (std::size_t s = 0; s < ensemble.n_slots(); ++s) {
    const auto x = ensemble.states(s);
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += x[i * d];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (x[i * d] - mean) * (x[i * d] - mean);
    var /= static_cast<double>(n);
    m.times.push_back(ensemble.time(s));
    m.mean.push_back(mean);
    m.variance.push_back(var);
  }
  return m;
}

}  // namespace mkv

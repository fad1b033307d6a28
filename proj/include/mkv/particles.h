// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mkv/coefficients.h"
#include "mkv/initial_law.h"
#include "mkv/measure.h"
#include "mkv/scenario.h"

namespace mkv {

class SimulationError : public std::runtime_error {
 public:
  SimulationError(std::size_t step, std::string coefficient, const std::string& what)
      : std::runtime_error(what), step_(step), coefficient_(std::move(coefficient)) {}
  std::size_t step() const { return step_; }
  const std::string& coefficient() const { return coefficient_; }

 private:
  std::size_t step_;
  std::string coefficient_;
};

enum class NoiseWiring {
  independent,
  // Deliberately broken: every particle's W increment is the common dB.
  shared_with_common,
};

struct SimulationOptions {
  std::size_t record_stride = 1;  // keep every k-th node; 0 and the last are always kept
  bool keep_noise = false;        // keep each particle's W at recorded nodes
  NoiseWiring wiring = NoiseWiring::independent;
  std::uint64_t particle_salt = 0;  // selects an independent family of particle streams
  std::size_t workers = 0;          // 0 = default_workers()
};

// Particle states at recorded nodes for one scenario.
class ParticleEnsemble {
 public:
  ParticleEnsemble(ScenarioPtr scenario, std::size_t n_particles, std::size_t dim,
                   std::vector<std::size_t> time_indices);

  const Scenario& scenario() const { return *scenario_; }
  const ScenarioPtr& scenario_ptr() const { return scenario_; }
  std::size_t n_particles() const { return n_; }
  std::size_t dim() const { return d_; }
  std::size_t n_slots() const { return time_indices_.size(); }
  const std::vector<std::size_t>& time_indices() const { return time_indices_; }
  std::size_t time_index(std::size_t slot) const { return time_indices_[slot]; }
  double time(std::size_t slot) const { return scenario_->grid().time(time_indices_[slot]); }
  // Throws if the node was not recorded.
  std::size_t slot_of(std::size_t time_index) const;
  bool has_time_index(std::size_t time_index) const;

  std::span<const double> states(std::size_t slot) const { return {x_.data() + slot * n_ * d_, n_ * d_}; }
  std::span<double> states_mut(std::size_t slot) { return {x_.data() + slot * n_ * d_, n_ * d_}; }
  std::span<const double> state(std::size_t slot, std::size_t i) const {
    return {x_.data() + (slot * n_ + i) * d_, d_};
  }
  MeasureView measure(std::size_t slot) const { return MeasureView::atoms(states(slot), d_); }

  bool has_noise() const { return !w_.empty(); }
  std::span<const double> w(std::size_t slot, std::size_t i) const {
    return {w_.data() + (slot * n_ + i) * d_, d_};
  }
  std::span<double> w_mut(std::size_t slot) { return {w_.data() + slot * n_ * d_, n_ * d_}; }
  void enable_noise() { w_.assign(x_.size(), 0.0); }

 private:
  ScenarioPtr scenario_;
  std::size_t n_, d_;
  std::vector<std::size_t> time_indices_;
  std::vector<double> x_;
  std::vector<double> w_;
};

// Everything the engine knows at node k, before stepping. At the final node
// only states/measure/aux are meaningful (nothing is stepped).
struct StepFrame {
  std::size_t step;
  double t;
  const Scenario& scenario;
  const MeasureView& measure;
  std::span<const double> states;  // N*d
  std::span<const double> aux;     // N*aux_dim
  std::span<const double> own_w;   // N*d, empty unless tracked
  const StepCache* cache;
  std::size_t n, d, aux_dim;
};
using StepObserver = std::function<void(const StepFrame&)>;

std::vector<std::size_t> recorded_indices(std::size_t n_steps, std::size_t stride);

// Euler-Maruyama for the conditional McKean-Vlasov system
//   X_{k+1} = X_k + b(t_k, mu_k, X_k) dt + sigma dW_k + gamma dB_k,
// mu_k the empirical measure of the ensemble at node k.
ParticleEnsemble simulate_mckv(const CoefficientField& field, const InitialLaw& init,
                               ScenarioPtr scenario, std::size_t n_particles,
                               const SimulationOptions& options = {},
                               const StepObserver& observer = {});
// Same engine; named separately for coefficients that read the common path
// or the particle's own history rather than the empirical measure.
ParticleEnsemble simulate_random_coeff(const CoefficientField& field, const InitialLaw& init,
                                       ScenarioPtr scenario, std::size_t n_particles,
                                       const SimulationOptions& options = {},
                                       const StepObserver& observer = {});

std::vector<ParticleEnsemble> simulate_scenarios(const CoefficientField& field,
                                                 const InitialLaw& init,
                                                 const std::vector<ScenarioPtr>& scenarios,
                                                 std::size_t n_particles,
                                                 const SimulationOptions& options = {});

EmpiricalMeasure empirical_from_particles(const ParticleEnsemble& ensemble, std::size_t time_index);

// Conditional mean and variance of coordinate 0 at every recorded node.
struct NodeMoments {
  std::vector<double> times, mean, variance;
};
NodeMoments node_moments(const ParticleEnsemble& ensemble);

void write_ensemble_csv(const std::vector<ParticleEnsemble>& ensembles, const std::string& path);
std::string ensemble_summary_json(const std::vector<ParticleEnsemble>& ensembles);

}  // namespace mkv

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "mkv/cylindrical.h"
#include "mkv/particles.h"

namespace mkv {

// Scenario samples of the law of the conditional measure flow, and their
// lift onto a fixed test basis. Nothing is ever stored as a density on the
// space of measures.
class ScenarioEnsembleSummary {
 public:
  ScenarioEnsembleSummary(std::vector<ParticleEnsemble> ensembles, TestBasis basis);

  std::size_t n_scenarios() const { return ensembles_.size(); }
  std::size_t n_slots() const { return ensembles_.front().n_slots(); }
  std::size_t dim() const { return ensembles_.front().dim(); }
  const TestBasis& basis() const { return basis_; }
  const std::vector<ParticleEnsemble>& ensembles() const { return ensembles_; }
  const ParticleEnsemble& ensemble(std::size_t s) const { return ensembles_[s]; }
  const std::vector<std::size_t>& time_indices() const { return ensembles_.front().time_indices(); }
  double time(std::size_t slot) const { return ensembles_.front().time(slot); }

  // <mu_t, phi_k> for scenario s at recorded slot `slot`.
  double feature(std::size_t s, std::size_t slot, std::size_t k) const {
    return features_[(s * n_slots() + slot) * basis_.size() + k];
  }
  std::vector<double> feature_vector(std::size_t s, std::size_t slot) const;
  // Raw moment of order 1..4 of coordinate 0.
  double moment(std::size_t s, std::size_t slot, unsigned order) const {
    return moments_[(s * n_slots() + slot) * 4 + (order - 1)];
  }

 private:
  std::vector<ParticleEnsemble> ensembles_;
  TestBasis basis_;
  std::vector<double> features_;
  std::vector<double> moments_;
};

// Finite stand-in for the lift m -> (<m, phi_n>)_n.
std::vector<double> lift(const MeasureView& m, const TestBasis& basis);

struct ResidualPath {
  std::string functional_id;
  std::vector<double> times;
  std::vector<double> residual;
  std::vector<double> stderr_;  // CLT standard error across scenarios
};

// R(t) = mean_s[F(mu_t) - F(mu_0)] - int_0^t mean_s[M F(mu_u)] du, with the
// time integral by the trapezoid rule over the recorded nodes.
ResidualPath fpe_residual(const ScenarioEnsembleSummary& summary, const CylindricalFunctional& F,
                          const CoefficientField& field, std::size_t workers = 0);

// Pathwise residual of Z_t = <mu_t, phi_i> against its lifted dynamics
//   dZ = <mu, L phi_i> dt + <mu, gamma phi_i'> dB
// in one scenario (d = 1). The dB integral uses the second-order sum that
// also charges <mu, gamma (gamma phi_i')'> (dB^2 - h)/2 per interval.
struct LiftedResidual {
  std::vector<double> times;
  std::vector<double> residual;
  double sup_abs() const;
};
LiftedResidual lifted_sde_residual(const ScenarioEnsembleSummary& summary, std::size_t basis_index,
                                   const Scenario& scenario, const CoefficientField& field);

// eta = Z(X_r, B_r) on [t_r, t_s).
struct SimpleIntegrand {
  std::string label;
  std::size_t r = 0, s = 0;  // time indices
  std::function<double(double x_r, double b_r)> z;
};

struct FubiniReport {
  std::string label;
  // B identity: E[int eta dB | G] - int E[eta | G] dB.
  double b_gap = 0.0, b_stderr = 0.0;
  // W identity: E[int eta dW | G].
  double w_gap = 0.0, w_stderr = 0.0;
  double b_lhs = 0.0, b_rhs = 0.0;
};
// Conditional expectations given the common noise are cross-particle means
// within the ensemble's scenario. Needs recorded W (keep_noise) and d = 1.
FubiniReport stochastic_fubini_check(const ParticleEnsemble& ensemble, const SimpleIntegrand& eta);

// [{functional_id, t, residual, stderr}, ...]
std::string residuals_json(const std::vector<ResidualPath>& paths);
// scenario_index,time_index,phi_index,value
void write_features_csv(const ScenarioEnsembleSummary& summary, const std::string& path);

}  // namespace mkv

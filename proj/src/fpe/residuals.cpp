// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "mkv/fpe.h"
#include "mkv/parallel.h"

namespace mkv {

namespace {

void mean_and_stderr(const std::vector<double>& v, double& mean, double& se) {
  const double n = static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += x;
  mean = s / n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  se = v.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
}

}  // namespace

ResidualPath fpe_residual(const ScenarioEnsembleSummary& summary, const CylindricalFunctional& F,
                          const CoefficientField& field, std::size_t workers) {
  if (F.basis().dim() != summary.dim() || field.dim() != summary.dim())
    throw std::invalid_argument("fpe_residual dimension mismatch");
  const std::size_t S = summary.n_scenarios(), L = summary.n_slots();
  // per[s * L + l] = F(mu_l) - F(mu_0) - int_0^{t_l} M F du for scenario s.
  std::vector<double> per(S * L, 0.0);
  parallel_for(S, workers, [&](std::size_t s) {
    const auto& ens = summary.ensemble(s);
    double integral = 0.0, prev_gen = 0.0, f0 = 0.0;
    for (std::size_t l = 0; l < L; ++l) {
      const auto m = ens.measure(l);
      GeneratorContext ctx{ens.time(l), ens.time_index(l), &ens.scenario()};
      const double gen = generator_direct(F, m, field, ctx);
      const double fv = F(m);
      if (l == 0) {
        f0 = fv;
      } else {
        integral += 0.5 * (gen + prev_gen) * (ens.time(l) - ens.time(l - 1));
      }
      prev_gen = gen;
      per[s * L + l] = fv - f0 - integral;
    }
  });
  ResidualPath out;
  out.functional_id = F.id();
  std::vector<double> col(S);
  for (std::size_t l = 0; l < L; ++l) {
    for (std::size_t s = 0; s < S; ++s) col[s] = per[s * L + l];
    double mean, se;
    mean_and_stderr(col, mean, se);
    out.times.push_back(summary.time(l));
    out.residual.push_back(mean);
    out.stderr_.push_back(se);
  }
  return out;
}

double LiftedResidual::sup_abs() const {
  double m = 0.0;
  for (double r : residual) m = std::max(m, std::abs(r));
  return m;
}

LiftedResidual lifted_sde_residual(const ScenarioEnsembleSummary& summary, std::size_t basis_index,
                                   const Scenario& scenario, const CoefficientField& field) {
  if (basis_index >= summary.basis().size()) throw std::out_of_range("basis index out of range");
  if (summary.dim() != 1 || field.dim() != 1)
    throw std::invalid_argument("lifted residual is implemented for d = 1");
  const ParticleEnsemble* ens = nullptr;
  for (const auto& e : summary.ensembles())
    if (e.scenario().index() == scenario.index() && e.scenario().same_path(scenario)) ens = &e;
  if (!ens) throw std::invalid_argument("scenario does not match any ensemble in the summary");

  const TestFunction& phi = summary.basis()[basis_index];
  LiftedResidual out;
  double drift_sum = 0.0, noise_sum = 0.0, z0 = 0.0;
  WeakPairings prev;
  for (std::size_t l = 0; l < ens->n_slots(); ++l) {
    const auto m = ens->measure(l);
    EvalContext c;
    c.t = ens->time(l);
    c.step = ens->time_index(l);
    c.scenario = &scenario;
    c.measure = &m;
    const auto cache = field.prepare(c);
    c.cache = cache.get();
    const WeakPairings p = weak_pairings(phi, m, field, c);
    if (l == 0) {
      z0 = p.value;
    } else {
      const double h = ens->time(l) - ens->time(l - 1);
      const double dB = scenario.value(ens->time_index(l))[0] - scenario.value(ens->time_index(l - 1))[0];
      drift_sum += prev.generator * h;
      noise_sum += prev.noise * dB + 0.5 * prev.correction * (dB * dB - h);
    }
    prev = p;
    out.times.push_back(c.t);
    out.residual.push_back(p.value - z0 - drift_sum - noise_sum);
  }
  return out;
}

FubiniReport stochastic_fubini_check(const ParticleEnsemble& ensemble, const SimpleIntegrand& eta) {
  if (ensemble.dim() != 1) throw std::invalid_argument("fubini check is implemented for d = 1");
  if (!ensemble.has_noise()) throw std::invalid_argument("fubini check needs recorded W increments");
  if (eta.r > eta.s) throw std::invalid_argument("integrand interval must have r <= s");
  const std::size_t ar = ensemble.slot_of(eta.r), as = ensemble.slot_of(eta.s);
  const Scenario& sc = ensemble.scenario();
  const double b_r = sc.value(eta.r)[0];
  const double dB = sc.value(eta.s)[0] - b_r;
  const std::size_t N = ensemble.n_particles();
  const double n = static_cast<double>(N);

  std::vector<double> z(N), wi(N);
  double zbar = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    z[i] = eta.z(ensemble.state(ar, i)[0], b_r);
    zbar += z[i];
    wi[i] = z[i] * (ensemble.w(as, i)[0] - ensemble.w(ar, i)[0]);
  }
  zbar /= n;

  FubiniReport rep;
  rep.label = eta.label;
  // Left side: cross-particle mean of the per-particle dB integrals.
  double lhs = 0.0;
  for (std::size_t i = 0; i < N; ++i) lhs += z[i] * dB;
  lhs /= n;
  // Right side: E[eta | G_u] is constant on [r, s) because X_r is independent
  // of the later common increments.
  rep.b_lhs = lhs;
  rep.b_rhs = zbar * dB;
  rep.b_gap = lhs - rep.b_rhs;
  double ss = 0.0;
  for (std::size_t i = 0; i < N; ++i) ss += (z[i] - zbar) * (z[i] - zbar) * dB * dB;
  rep.b_stderr = N > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;

  mean_and_stderr(wi, rep.w_gap, rep.w_stderr);
  return rep;
}

std::string residuals_json(const std::vector<ResidualPath>& paths) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& p : paths)
    for (std::size_t l = 0; l < p.times.size(); ++l)
      out.push_back({{"functional_id", p.functional_id},
                     {"t", p.times[l]},
                     {"residual", p.residual[l]},
                     {"stderr", p.stderr_[l]}});
  return out.dump(2);
}

}  // namespace mkv

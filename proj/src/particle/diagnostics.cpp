// SPDX-License-Identifier: Apache-2.0
#include "mkv/diagnostics.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace mkv {

double DiagnosticsReport::fraction_below(double alpha) const {
  if (tests.empty()) return 0.0;
  std::size_t c = 0;
  for (const auto& t : tests) c += t.p_value < alpha;
  return static_cast<double>(c) / static_cast<double>(tests.size());
}

double DiagnosticsReport::min_p_value() const {
  double m = 1.0;
  for (const auto& t : tests) m = std::min(m, t.p_value);
  return m;
}

namespace {

double two_sided(double z) { return std::erfc(std::abs(z) / std::numbers::sqrt2); }

}  // namespace

DiagnosticsReport diagnostics(const ParticleEnsemble& ens, const CoefficientField& field, double p,
                              const DiagnosticsOptions& options) {
  if (!(p >= 1.0)) throw std::invalid_argument("diagnostics needs p >= 1");
  if (ens.n_slots() < 3) throw std::invalid_argument("diagnostics needs at least three recorded nodes");
  const std::size_t N = ens.n_particles(), d = ens.dim();
  const Scenario& sc = ens.scenario();
  DiagnosticsReport rep;

  // (i) integrability.
  std::vector<double> b(d), a(d * d), aux(field.aux_dim(), 0.0), wz(d, 0.0);
  for (std::size_t s = 0; s + 1 < ens.n_slots(); ++s) {
    const MeasureView view = ens.measure(s);
    EvalContext c;
    c.t = ens.time(s);
    c.step = ens.time_index(s);
    c.measure = &view;
    c.scenario = &sc;
    c.aux = aux;
    const auto cache = field.prepare(c);
    c.cache = cache.get();
    double acc = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      c.particle = i;
      c.own_w = ens.has_noise() ? ens.w(s, i) : std::span<const double>(wz);
      field.drift(c, ens.state(s, i), b);
      field.diffusion(c, ens.state(s, i), a);
      double nb = 0.0, na = 0.0;
      for (double v : b) nb += v * v;
      for (double v : a) na += v * v;
      acc += std::pow(std::sqrt(nb), p) + std::pow(std::sqrt(na), p);
    }
    rep.integrability.per_step.push_back(acc / static_cast<double>(N) * (ens.time(s + 1) - ens.time(s)));
  }
  auto& I = rep.integrability;
  for (double v : I.per_step) I.estimate += v;
  std::vector<double> sorted = I.per_step;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2), sorted.end());
  I.median = sorted[sorted.size() / 2];
  I.worst_step = static_cast<std::size_t>(std::max_element(I.per_step.begin(), I.per_step.end()) - I.per_step.begin());
  I.flagged = !std::isfinite(I.estimate) || I.per_step[I.worst_step] > 1e3 * I.median;

  if (!ens.has_noise() || options.state_tests + options.common_tests == 0) return rep;

  // (ii)a: sum_i (x_i - xbar) dW_i / sqrt(h sum (x_i - xbar)^2) across particles.
  const std::size_t intervals = ens.n_slots() - 1;
  for (std::size_t j = 0; j < options.state_tests; ++j) {
    const std::size_t s = (j * intervals) / options.state_tests;
    const std::size_t coord = j % d;
    const double h = ens.time(s + 1) - ens.time(s);
    double xbar = 0.0;
    for (std::size_t i = 0; i < N; ++i) xbar += ens.state(s, i)[coord];
    xbar /= static_cast<double>(N);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      const double xc = ens.state(s, i)[coord] - xbar;
      num += xc * (ens.w(s + 1, i)[coord] - ens.w(s, i)[coord]);
      den += xc * xc;
    }
    IndependenceTest t;
    t.label = "state_vs_future_w@" + std::to_string(ens.time_index(s)) + "/x" + std::to_string(coord + 1);
    t.statistic = den > 0.0 ? num / std::sqrt(h * den) : 0.0;
    t.p_value = two_sided(t.statistic);
    rep.tests.push_back(std::move(t));
  }

  // (ii)b: sum_k dW^i_k dB_k / sqrt(sum_k h_k dB_k^2) along time, per particle.
  for (std::size_t j = 0; j < options.common_tests; ++j) {
    const std::size_t i = (j * N) / std::max<std::size_t>(options.common_tests, 1);
    const std::size_t coord = j % d;
    double num = 0.0, den = 0.0;
    for (std::size_t s = 0; s < intervals; ++s) {
      const double h = ens.time(s + 1) - ens.time(s);
      const double db = sc.value(ens.time_index(s + 1))[coord] - sc.value(ens.time_index(s))[coord];
      num += (ens.w(s + 1, i)[coord] - ens.w(s, i)[coord]) * db;
      den += h * db * db;
    }
    IndependenceTest t;
    t.label = "w_vs_common/particle" + std::to_string(i) + "/x" + std::to_string(coord + 1);
    t.statistic = den > 0.0 ? num / std::sqrt(den) : 0.0;
    t.p_value = two_sided(t.statistic);
    rep.tests.push_back(std::move(t));
  }
  return rep;
}

}  // namespace mkv

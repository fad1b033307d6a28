// SPDX-License-Identifier: Apache-2.0
#include <stdexcept>

#include "mkv/spde.h"

namespace mkv {

std::vector<double> weak_residual(const DensityFlow& flow, const TestFunction& phi,
                                  const CoefficientField& field, StochasticQuadrature quadrature) {
  if (phi.dim() != 1) throw std::invalid_argument("weak_residual needs a one-dimensional test function");
  const auto& grid = flow.grid();
  if (phi.center()[0] - phi.radius() < grid.x_min() || phi.center()[0] + phi.radius() > grid.x_max())
    throw std::invalid_argument("test function support leaves the spatial grid");
  const Scenario& sc = flow.scenario();
  std::vector<double> r(flow.n_slots(), 0.0);
  double integral = 0.0;
  double first = 0.0;
  for (std::size_t s = 0; s < flow.n_slots(); ++s) {
    const MeasureView mu = flow.measure(s);
    EvalContext c;
    c.t = flow.time(s);
    c.step = flow.time_index(s);
    c.scenario = &sc;
    c.measure = &mu;
    const auto cache = field.prepare(c);
    c.cache = cache.get();
    const WeakPairings p = weak_pairings(phi, mu, field, c);
    if (s == 0) first = p.value;
    r[s] = p.value - first - integral;
    if (s + 1 == flow.n_slots()) break;
    const double h = flow.time(s + 1) - flow.time(s);
    const double dB = sc.value(flow.time_index(s + 1))[0] - sc.value(flow.time_index(s))[0];
    integral += p.generator * h + p.noise * dB;
    if (quadrature == StochasticQuadrature::milstein) integral += 0.5 * (dB * dB - h) * p.correction;
  }
  return r;
}

}  // namespace mkv

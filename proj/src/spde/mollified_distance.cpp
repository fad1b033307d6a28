// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "mkv/spde.h"

namespace mkv {

double mollified_l2(const MeasureView& nu1, const MeasureView& nu2, double delta, const SpatialGrid& eval) {
  if (!(delta > 0.0)) throw std::invalid_argument("mollification scale delta must be positive");
  if (nu1.dim() != 1 || nu2.dim() != 1) throw std::invalid_argument("mollified_l2 is one-dimensional");
  const double norm = 1.0 / std::sqrt(2.0 * std::numbers::pi * delta);
  double acc = 0.0;
  for (std::size_t q = 0; q < eval.n_cells(); ++q) {
    const double x = eval.center(q);
    double z1 = 0.0, z2 = 0.0;
    for (std::size_t i = 0; i < nu1.size(); ++i) {
      const double y = x - nu1.point1(i);
      z1 += nu1.weight(i) * std::exp(-0.5 * y * y / delta);
    }
    for (std::size_t i = 0; i < nu2.size(); ++i) {
      const double y = x - nu2.point1(i);
      z2 += nu2.weight(i) * std::exp(-0.5 * y * y / delta);
    }
    const double z = (z1 - z2) * norm;
    acc += z * z * eval.dx();
  }
  return std::sqrt(acc);
}

namespace {

// sup |f| + ... + sup |f^(order)| from grid values via central differences.
double grid_ck_norm(const std::vector<double>& f, double dx, int order) {
  double total = 0.0;
  std::vector<double> cur = f;
  for (int o = 0; o <= order; ++o) {
    double m = 0.0;
    for (double v : cur) m = std::max(m, std::abs(v));
    total += m;
    if (o == order || cur.size() < 3) break;
    std::vector<double> next(cur.size() - 2);
    for (std::size_t j = 1; j + 1 < cur.size(); ++j) next[j - 1] = (cur[j + 1] - cur[j - 1]) / (2.0 * dx);
    cur.swap(next);
  }
  return total;
}

}  // namespace

MollifiedDistance l2_mollified_distance(const DensityFlow& flow1, const DensityFlow& flow2, double delta,
                                         const CoefficientField& field, double k_star) {
  if (!(delta > 0.0)) throw std::invalid_argument("mollification scale delta must be positive");
  if (flow1.time_indices() != flow2.time_indices())
    throw std::invalid_argument("flows are recorded on different nodes");
  const auto& grid = flow1.grid();
  MollifiedDistance out;
  double integral = 0.0;
  double prev_rate = 0.0;
  std::vector<double> b(grid.n_cells()), a(grid.n_cells()), g(grid.n_cells()), s(grid.n_cells());
  for (std::size_t k = 0; k < flow1.n_slots(); ++k) {
    const MeasureView m1 = flow1.measure(k);
    const MeasureView m2 = flow2.measure(k);
    const double dist = mollified_l2(m1, m2, delta, grid);

    EvalContext c;
    c.t = flow1.time(k);
    c.step = flow1.time_index(k);
    c.scenario = &flow1.scenario();
    c.measure = &m1;
    const auto cache = field.prepare(c);
    c.cache = cache.get();
    for (std::size_t j = 0; j < grid.n_cells(); ++j) {
      const double x[1] = {grid.center(j)};
      field.drift(c, x, std::span<double>(&b[j], 1));
      field.sigma(c, x, std::span<double>(&s[j], 1));
      field.gamma(c, x, std::span<double>(&g[j], 1));
      a[j] = s[j] * s[j] + g[j] * g[j];
    }
    const double gn = grid_ck_norm(g, grid.dx(), 2);
    const double sn = grid_ck_norm(s, grid.dx(), 1);
    const double rate = k_star * (grid_ck_norm(b, grid.dx(), 1) + grid_ck_norm(a, grid.dx(), 2) + gn * gn + sn * sn);
    if (k > 0) integral += 0.5 * (rate + prev_rate) * (flow1.time(k) - flow1.time(k - 1));
    prev_rate = rate;
    const double y = std::exp(2.0 * integral);
    out.times.push_back(flow1.time(k));
    out.distance.push_back(dist);
    out.rate.push_back(rate);
    out.weight.push_back(y);
    out.normalised.push_back(dist * dist / y);
  }
  return out;
}

}  // namespace mkv

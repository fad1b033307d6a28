// SPDX-License-Identifier: Apache-2.0
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

#include "mkv/checked_io.h"
#include "mkv/particles.h"
#include "mkv/spde.h"

namespace mkv {

SpatialGrid::SpatialGrid(double x_min, double x_max, std::size_t n_cells)
    : x_min_(x_min), x_max_(x_max), n_(n_cells) {
  if (!(x_max > x_min)) throw std::invalid_argument("spatial grid needs x_min < x_max");
  if (n_cells < 8) throw std::invalid_argument("spatial grid needs at least 8 cells");
  dx_ = (x_max - x_min) / static_cast<double>(n_cells);
  centers_.resize(n_);
  for (std::size_t j = 0; j < n_; ++j) centers_[j] = center(j);
}

DensityFlow::DensityFlow(SpatialGrid grid, ScenarioPtr scenario, std::vector<std::size_t> time_indices)
    : grid_(std::move(grid)), scenario_(std::move(scenario)), time_indices_(std::move(time_indices)) {
  if (!scenario_) throw std::invalid_argument("density flow needs a scenario");
  rho_.assign(time_indices_.size() * grid_.n_cells(), 0.0);
}

std::size_t DensityFlow::slot_of(std::size_t time_index) const {
  const auto it = std::lower_bound(time_indices_.begin(), time_indices_.end(), time_index);
  if (it == time_indices_.end() || *it != time_index)
    throw std::out_of_range("time index " + std::to_string(time_index) + " was not recorded");
  return static_cast<std::size_t>(it - time_indices_.begin());
}

std::vector<double> density_from_law(const InitialLaw& law, const SpatialGrid& grid, double min_width) {
  if (law.dim() != 1) throw std::invalid_argument("grid densities are one-dimensional");
  const InitialLaw w = min_width > 0.0 ? law.widened(min_width) : law;
  std::vector<double> rho(grid.n_cells());
  double mass = 0.0;
  for (std::size_t j = 0; j < grid.n_cells(); ++j) {
    const double lo = grid.x_min() + static_cast<double>(j) * grid.dx();
    rho[j] = w.interval_mass(lo, lo + grid.dx());
    mass += rho[j];
  }
  if (!(mass > 0.0)) throw std::invalid_argument("initial law has no mass on the grid");
  for (double& r : rho) r /= mass * grid.dx();
  return rho;
}

namespace {

// Divergence of the central flux of (coef * v), zero flux at both walls.
void divergence(std::span<const double> coef, std::span<const double> v, double dx, std::vector<double>& out) {
  const std::size_t n = v.size();
  out.assign(n, 0.0);
  double left = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double right = j + 1 < n ? 0.5 * (coef[j] * v[j] + coef[j + 1] * v[j + 1]) : 0.0;
    out[j] = (right - left) / dx;
    left = right;
  }
}

}  // namespace

DensityFlow solve_spde(const CoefficientField& field, std::vector<double> rho0, const SpatialGrid& grid,
                       ScenarioPtr scenario, const SpdeOptions& options) {
  if (!scenario) throw std::invalid_argument("solve_spde needs a scenario");
  if (field.dim() != 1 || scenario->dim() != 1) throw std::invalid_argument("solve_spde is one-dimensional");
  const std::size_t n = grid.n_cells();
  if (rho0.size() != n) throw std::invalid_argument("initial density does not match the grid");
  const Scenario& sc = *scenario;
  const std::size_t n_steps = sc.grid().n_steps();
  const double dt = sc.grid().dt();
  const double dx = grid.dx();
  const double lambda = dt / dx;

  DensityFlow flow(grid, scenario, recorded_indices(n_steps, options.record_stride));
  double mass0 = 0.0;
  for (double r : rho0) {
    if (!(r >= 0.0) || !std::isfinite(r)) throw std::invalid_argument("initial density must be nonnegative");
    mass0 += r * dx;
  }
  flow.clipped_mass.reserve(n_steps);

  std::vector<double> rho = std::move(rho0), star(n), b(n), s(n), g(n), a1, a2;
  std::vector<double> lower(n), diag(n), upper(n), cprime(n), dprime(n);
  std::size_t slot = 0;
  for (std::size_t k = 0; k <= n_steps; ++k) {
    if (slot < flow.n_slots() && flow.time_index(slot) == k) {
      std::copy(rho.begin(), rho.end(), flow.density_mut(slot).begin());
      ++slot;
    }
    if (k == n_steps) break;

    const MeasureView view = MeasureView::cells(grid.centers(), rho, dx);
    EvalContext c;
    c.t = sc.grid().time(k);
    c.step = k;
    c.measure = &view;
    c.scenario = &sc;
    const auto cache = field.prepare(c);
    c.cache = cache.get();
    for (std::size_t j = 0; j < n; ++j) {
      const double x[1] = {grid.center(j)};
      c.particle = j;
      field.drift(c, x, std::span<double>(&b[j], 1));
      field.sigma(c, x, std::span<double>(&s[j], 1));
      field.gamma(c, x, std::span<double>(&g[j], 1));
      if (!std::isfinite(b[j]) || !std::isfinite(s[j]) || !std::isfinite(g[j]))
        throw SimulationError(k, "coefficient", fmt::format("non-finite coefficient at step {} cell {}", k, j));
    }

    // Transport by the common noise.
    const double dB = sc.increment(k)[0];
    double cfl = 0.0;
    for (std::size_t j = 0; j < n; ++j) cfl = std::max(cfl, std::abs(g[j] * dB) / dx);
    flow.max_cfl = std::max(flow.max_cfl, cfl);
    if (cfl > 1.0) ++flow.cfl_warnings;
    divergence(g, rho, dx, a1);
    for (std::size_t j = 0; j < n; ++j) star[j] = rho[j] - dB * a1[j];
    if (options.transport == TransportScheme::milstein) {
      divergence(g, a1, dx, a2);
      const double w = 0.5 * (dB * dB - dt);
      for (std::size_t j = 0; j < n; ++j) star[j] += w * a2[j];
    }

    // Backward Euler for the Fokker-Planck part; face flux H = alpha rho_j - beta rho_{j+1}.
    std::fill(lower.begin(), lower.end(), 0.0);
    std::fill(upper.begin(), upper.end(), 0.0);
    std::fill(diag.begin(), diag.end(), 1.0);
    for (std::size_t j = 0; j + 1 < n; ++j) {
      const double v = 0.5 * (b[j] + b[j + 1]);
      const double dl = 0.5 * (s[j] * s[j] + g[j] * g[j]) / dx;
      const double dr = 0.5 * (s[j + 1] * s[j + 1] + g[j + 1] * g[j + 1]) / dx;
      double alpha = 0.5 * v + dl, beta = -0.5 * v + dr;
      if (alpha < 0.0 || beta < 0.0) {
        alpha = std::max(v, 0.0) + dl;
        beta = std::max(-v, 0.0) + dr;
      }
      diag[j] += lambda * alpha;
      upper[j] = -lambda * beta;
      diag[j + 1] += lambda * beta;
      lower[j + 1] = -lambda * alpha;
    }
    cprime[0] = upper[0] / diag[0];
    dprime[0] = star[0] / diag[0];
    for (std::size_t j = 1; j < n; ++j) {
      const double m = diag[j] - lower[j] * cprime[j - 1];
      cprime[j] = upper[j] / m;
      dprime[j] = (star[j] - lower[j] * dprime[j - 1]) / m;
    }
    rho[n - 1] = dprime[n - 1];
    for (std::size_t j = n - 1; j-- > 0;) rho[j] = dprime[j] - cprime[j] * rho[j + 1];

    double clipped = 0.0;
    for (double& r : rho) {
      if (!std::isfinite(r)) throw SimulationError(k, "density", fmt::format("non-finite density at step {}", k));
      if (r < 0.0) {
        clipped -= r * dx;
        r = 0.0;
      }
    }
    flow.clipped_mass.push_back(clipped);
    if (clipped > options.max_clip_per_step)
      throw SimulationError(k, "density",
                            fmt::format("step {} clipped mass {:.3e} above {:.1e}", k, clipped,
                                        options.max_clip_per_step));
    if (clipped > 0.0) {
      double mass = 0.0;
      for (double r : rho) mass += r * dx;
      for (double& r : rho) r *= mass0 / mass;
    }
  }
  return flow;
}

void write_density_csv(const std::vector<DensityFlow>& flows, const std::string& path) {
  std::ostringstream os;
  os << "scenario_index,time_index,cell_index,x,rho\n";
  for (const auto& f : flows)
    for (std::size_t s = 0; s < f.n_slots(); ++s) {
      const auto rho = f.density(s);
      for (std::size_t j = 0; j < rho.size(); ++j)
        os << f.scenario().index() << ',' << f.time_index(s) << ',' << j << ',' << exact(f.grid().center(j))
           << ',' << exact(rho[j]) << '\n';
    }
  write_checked(path, os.str());
}

std::vector<DensityFlow> read_density_csv(const std::string& path, const std::vector<ScenarioPtr>& scenarios) {
  const std::string body = read_checked(path);
  std::istringstream is(body);
  std::string line;
  if (!std::getline(is, line) || line != "scenario_index,time_index,cell_index,x,rho")
    throw PersistenceError(path + ": bad density header");
  struct Acc {
    std::vector<std::size_t> times;
    std::vector<double> xs;
    std::vector<std::vector<double>> rho;
  };
  std::map<std::uint64_t, Acc> acc;
  std::size_t row = 1;
  while (std::getline(is, line)) {
    ++row;
    const auto f = split(line, ',');
    if (f.size() != 5) throw PersistenceError(path + ": row " + std::to_string(row) + " needs 5 fields");
    auto& a = acc[parse_u64(f[0])];
    const std::size_t t = parse_u64(f[1]), j = parse_u64(f[2]);
    if (a.times.empty() || a.times.back() != t) {
      a.times.push_back(t);
      a.rho.emplace_back();
    }
    if (j != a.rho.back().size()) throw PersistenceError(path + ": cells out of order at row " + std::to_string(row));
    a.rho.back().push_back(parse_double(f[4]));
    if (a.times.size() == 1) a.xs.push_back(parse_double(f[3]));
  }
  std::vector<DensityFlow> out;
  for (auto& [idx, a] : acc) {
    ScenarioPtr sc;
    for (const auto& s : scenarios)
      if (s->index() == idx) sc = s;
    if (!sc) throw PersistenceError(path + ": no scenario with index " + std::to_string(idx));
    const std::size_t n = a.xs.size();
    if (n < 8) throw PersistenceError(path + ": too few cells");
    const double dx = (a.xs.back() - a.xs.front()) / static_cast<double>(n - 1);
    SpatialGrid grid(a.xs.front() - 0.5 * dx, a.xs.back() + 0.5 * dx, n);
    DensityFlow flow(grid, sc, a.times);
    for (std::size_t s = 0; s < a.times.size(); ++s) {
      if (a.rho[s].size() != n) throw PersistenceError(path + ": ragged density rows");
      std::copy(a.rho[s].begin(), a.rho[s].end(), flow.density_mut(s).begin());
    }
    out.push_back(std::move(flow));
  }
  return out;
}

void write_residual_csv(const std::vector<double>& times, const std::vector<double>& residual,
                        const std::string& path) {
  std::ostringstream os;
  os << "time,residual\n";
  for (std::size_t i = 0; i < times.size(); ++i) os << exact(times[i]) << ',' << exact(residual[i]) << '\n';
  write_checked(path, os.str());
}

}  // namespace mkv

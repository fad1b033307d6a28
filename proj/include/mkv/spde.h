// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mkv/coefficients.h"
#include "mkv/initial_law.h"
#include "mkv/measure.h"
#include "mkv/scenario.h"

namespace mkv {

// Uniform cells on [x_min, x_max] with zero-flux walls. d = 1.
class SpatialGrid {
 public:
  SpatialGrid(double x_min, double x_max, std::size_t n_cells);

  double x_min() const { return x_min_; }
  double x_max() const { return x_max_; }
  std::size_t n_cells() const { return n_; }
  double dx() const { return dx_; }
  double center(std::size_t j) const { return x_min_ + (static_cast<double>(j) + 0.5) * dx_; }
  const std::vector<double>& centers() const { return centers_; }

 private:
  double x_min_, x_max_;
  std::size_t n_;
  double dx_;
  std::vector<double> centers_;
};

// Cell averages of a law on the grid, renormalised to mass one. A point mass
// (or a Gaussian narrower than min_width) is widened to a Gaussian of
// standard deviation min_width so that it is resolved by the cells.
std::vector<double> density_from_law(const InitialLaw& law, const SpatialGrid& grid, double min_width);

enum class TransportScheme {
  euler,     // rho -= d/dx(gamma rho) dB
  milstein,  // adds (dB^2 - dt)/2 * d/dx(gamma d/dx(gamma rho))
};

struct SpdeOptions {
  std::size_t record_stride = 1;
  TransportScheme transport = TransportScheme::milstein;
  double max_clip_per_step = 1e-3;
};

// Density path on the grid for one scenario.
class DensityFlow {
 public:
  DensityFlow(SpatialGrid grid, ScenarioPtr scenario, std::vector<std::size_t> time_indices);

  const SpatialGrid& grid() const { return grid_; }
  const Scenario& scenario() const { return *scenario_; }
  const ScenarioPtr& scenario_ptr() const { return scenario_; }
  std::size_t n_slots() const { return time_indices_.size(); }
  const std::vector<std::size_t>& time_indices() const { return time_indices_; }
  std::size_t time_index(std::size_t slot) const { return time_indices_[slot]; }
  double time(std::size_t slot) const { return scenario_->grid().time(time_indices_[slot]); }
  std::size_t slot_of(std::size_t time_index) const;

  std::span<const double> density(std::size_t slot) const {
    return {rho_.data() + slot * grid_.n_cells(), grid_.n_cells()};
  }
  std::span<double> density_mut(std::size_t slot) {
    return {rho_.data() + slot * grid_.n_cells(), grid_.n_cells()};
  }
  MeasureView measure(std::size_t slot) const {
    return MeasureView::cells(grid_.centers(), density(slot), grid_.dx());
  }

  std::vector<double> clipped_mass;  // per step
  std::size_t cfl_warnings = 0;      // steps with |gamma dB| / dx > 1
  double max_cfl = 0.0;

 private:
  SpatialGrid grid_;
  ScenarioPtr scenario_;
  std::vector<std::size_t> time_indices_;
  std::vector<double> rho_;
};

// Finite-volume scheme for
//   d rho = [ -d/dx(b rho) + 1/2 d2/dx2(a rho) ] dt - d/dx(gamma rho) dB,  a = sigma^2 + gamma^2.
// Each step: explicit transport by dB (central fluxes), then one backward-Euler
// step of the Fokker-Planck part with a tridiagonal solve (central drift flux,
// falling back to upwind where the cell Peclet number exceeds 2), then
// negatives are clipped and the mass renormalised. Coefficients are frozen
// at the start of the step. Throws SimulationError if a step clips more than
// max_clip_per_step.
DensityFlow solve_spde(const CoefficientField& field, std::vector<double> rho0, const SpatialGrid& grid,
                       ScenarioPtr scenario, const SpdeOptions& options = {});

enum class StochasticQuadrature {
  ito,       // left-point sums
  milstein,  // left-point sums plus the iterated-integral correction
};

// R(t) = <mu_t, phi> - <mu_0, phi> - int <mu_s, L phi> ds - int <mu_s, phi' gamma> dB_s
// on the recorded nodes. L phi = b phi' + a phi''/2.
std::vector<double> weak_residual(const DensityFlow& flow, const TestFunction& phi,
                                  const CoefficientField& field,
                                  StochasticQuadrature quadrature = StochasticQuadrature::milstein);

struct MollifiedDistance {
  std::vector<double> times;
  std::vector<double> distance;  // ||G_delta * (nu1 - nu2)||_2
  std::vector<double> rate;      // K_t
  std::vector<double> weight;    // Y_t = exp(2 int_0^t K)
  std::vector<double> normalised;  // distance^2 / Y_t
};

// ||G_delta * (nu1 - nu2)||_2 by direct convolution on the grid nodes, with
// G_delta the centred Gaussian of variance delta.
double mollified_l2(const MeasureView& nu1, const MeasureView& nu2, double delta, const SpatialGrid& eval);

// Along two flows on the same grid and time nodes. K_t is the sum of grid sup
// norms ||b||_C1 + ||a||_C2 + ||gamma||_C2^2 + ||sigma||_W1inf^2 for the
// coefficients evaluated on flow1, times k_star.
MollifiedDistance l2_mollified_distance(const DensityFlow& flow1, const DensityFlow& flow2, double delta,
                                         const CoefficientField& field, double k_star = 1.0);

void write_density_csv(const std::vector<DensityFlow>& flows, const std::string& path);
std::vector<DensityFlow> read_density_csv(const std::string& path, const std::vector<ScenarioPtr>& scenarios);
void write_residual_csv(const std::vector<double>& times, const std::vector<double>& residual,
                        const std::string& path);

}  // namespace mkv

// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "mkv/checked_io.h"
#include "mkv/coefficients.h"
#include "mkv/initial_law.h"
#include "mkv/particles.h"
#include "mkv/spde.h"
#include "mkv/wasserstein.h"

using namespace mkv;

namespace {

ScenarioPtr scenario(double T, std::size_t steps, std::uint64_t seed, std::uint64_t idx = 0) {
  return std::make_shared<const Scenario>(make_scenario(TimeGrid(T, steps), 1, seed, idx));
}

double gauss_pdf(double x, double m, double v) {
  return std::exp(-0.5 * (x - m) * (x - m) / v) / std::sqrt(2.0 * std::numbers::pi * v);
}

// Cell average of N(m, v) over [lo, lo + dx].
double gauss_cell(double lo, double dx, double m, double v) {
  const double s = std::sqrt(2.0 * v);
  return 0.5 * (std::erf((lo + dx - m) / s) - std::erf((lo - m) / s)) / dx;
}

double mass(std::span<const double> rho, double dx) {
  double m = 0.0;
  for (double r : rho) m += r * dx;
  return m;
}

}  // namespace

TEST(SpatialGrid, RejectsDegenerateGrids) {
  EXPECT_THROW(SpatialGrid(1.0, 1.0, 16), std::invalid_argument);
  EXPECT_THROW(SpatialGrid(0.0, 1.0, 7), std::invalid_argument);
  const SpatialGrid g(-1.0, 1.0, 8);
  EXPECT_DOUBLE_EQ(g.dx(), 0.25);
  EXPECT_DOUBLE_EQ(g.center(0), -0.875);
}

TEST(SpatialGrid, DensityFromLawHasUnitMass) {
  const SpatialGrid g(-5.0, 5.0, 500);
  const auto rho = density_from_law(InitialLaw::point_mass({0.3}), g, 0.1);
  EXPECT_NEAR(mass(rho, g.dx()), 1.0, 1e-14);
  double mean = 0.0;
  for (std::size_t j = 0; j < g.n_cells(); ++j) mean += g.center(j) * rho[j] * g.dx();
  EXPECT_NEAR(mean, 0.3, 1e-10);
}

TEST(SolveSpde, ZeroGeneratorIsBitStable) {
  const SpatialGrid g(-4.0, 4.0, 200);
  const auto rho0 = density_from_law(InitialLaw::gaussian({0.5}, {0.7}), g, 0.0);
  const auto f = constant_field(0.0, 0.0, 0.0);
  const auto flow = solve_spde(*f, rho0, g, scenario(1.0, 100, 3));
  for (std::size_t s = 0; s < flow.n_slots(); ++s) {
    const auto r = flow.density(s);
    for (std::size_t j = 0; j < g.n_cells(); ++j) ASSERT_EQ(r[j], rho0[j]);
  }
}

// b = 0, sigma = 1: the density at t is the initial Gaussian widened by t.
TEST(SolveSpde, HeatEquationMatchesHeatKernel) {
  const double T = 0.5, w = 0.2;
  const SpatialGrid g(-6.0, 6.0, 1200);
  const auto rho0 = density_from_law(InitialLaw::gaussian({0.0}, {w}), g, 0.0);
  const auto f = constant_field(0.0, 1.0, 0.0);
  SpdeOptions o;
  o.record_stride = 5000;
  const auto flow = solve_spde(*f, rho0, g, scenario(T, 5000, 11), o);
  const auto r = flow.density(flow.n_slots() - 1);
  double l2 = 0.0;
  for (std::size_t j = 0; j < g.n_cells(); ++j) {
    const double e = r[j] - gauss_pdf(g.center(j), 0.0, w * w + T);
    l2 += e * e * g.dx();
  }
  EXPECT_LT(std::sqrt(l2), 1e-3);
}

TEST(SolveSpde, HeatErrorShrinksUnderRefinement) {
  const double T = 0.25, w = 0.2;
  auto error = [&](std::size_t cells, std::size_t steps) {
    const SpatialGrid g(-5.0, 5.0, cells);
    const auto rho0 = density_from_law(InitialLaw::gaussian({0.0}, {w}), g, 0.0);
    SpdeOptions o;
    o.record_stride = steps;
    const auto flow = solve_spde(*constant_field(0.0, 1.0, 0.0), rho0, g, scenario(T, steps, 2), o);
    const auto r = flow.density(flow.n_slots() - 1);
    double l2 = 0.0;
    for (std::size_t j = 0; j < g.n_cells(); ++j) {
      const double e = r[j] - gauss_pdf(g.center(j), 0.0, w * w + T);
      l2 += e * e * g.dx();
    }
    return std::sqrt(l2);
  };
  const double coarse = error(250, 100), fine = error(500, 200);
  EXPECT_LT(fine, 0.7 * coarse);
}

// gamma = 1, no idiosyncratic noise: rho_t is rho_0 translated by B_t.
TEST(SolveSpde, PureTransportShiftsByCommonNoise) {
  const SpatialGrid g(-5.0, 5.0, 1000);
  const auto rho0 = density_from_law(InitialLaw::gaussian({0.0}, {0.5}), g, 0.0);
  const auto sc = scenario(1.0, 1000, 21);
  SpdeOptions o;
  o.record_stride = 250;
  const auto flow = solve_spde(*constant_field(0.0, 0.0, 1.0), rho0, g, sc, o);
  for (std::size_t s = 1; s < flow.n_slots(); ++s) {
    const double b = sc->value(flow.time_index(s))[0];
    std::vector<double> exact(g.n_cells());
    for (std::size_t j = 0; j < g.n_cells(); ++j)
      exact[j] = gauss_cell(g.x_min() + j * g.dx(), g.dx(), b, 0.25);
    const double w1 = wasserstein1_1d(flow.measure(s), MeasureView::cells(g.centers(), exact, g.dx()), 4096);
    EXPECT_LT(w1, 0.02) << "t=" << flow.time(s);
  }
}

TEST(SolveSpde, MassAndPositivityOnMeanFieldOu) {
  const SpatialGrid g(-6.0, 6.0, 600);
  const auto f = AffineMeanField::isotropic(1, 1.0, 0.5, 0.8, 0.9);
  const auto rho0 = density_from_law(InitialLaw::point_mass({1.0}), g, 0.1);
  const auto flow = solve_spde(*f, rho0, g, scenario(1.0, 500, 5));
  EXPECT_EQ(flow.n_slots(), 501u);
  for (std::size_t s = 0; s < flow.n_slots(); ++s) {
    const auto r = flow.density(s);
    EXPECT_NEAR(mass(r, g.dx()), 1.0, 1e-8);
    for (double v : r) ASSERT_GE(v, 0.0);
  }
  ASSERT_EQ(flow.clipped_mass.size(), 500u);
  for (double c : flow.clipped_mass) EXPECT_LE(c, 1e-3);
}

TEST(SolveSpde, LargeCommonNoiseRaisesCflWarnings) {
  const SpatialGrid g(-20.0, 20.0, 400);
  const auto rho0 = density_from_law(InitialLaw::gaussian({0.0}, {2.0}), g, 0.0);
  SpdeOptions o;
  o.max_clip_per_step = 1.0;
  const auto flow = solve_spde(*constant_field(0.0, 1.0, 3.0), rho0, g, scenario(1.0, 50, 8), o);
  EXPECT_GT(flow.cfl_warnings, 0u);
  EXPECT_GT(flow.max_cfl, 1.0);
}

TEST(SolveSpde, ExcessiveClippingAborts) {
  const SpatialGrid g(-3.0, 3.0, 600);
  const auto rho0 = density_from_law(InitialLaw::gaussian({0.0}, {0.05}), g, 0.0);
  SpdeOptions o;
  o.transport = TransportScheme::euler;
  EXPECT_THROW(solve_spde(*constant_field(0.0, 0.0, 1.0), rho0, g, scenario(1.0, 10, 4), o),
               SimulationError);
}

TEST(SolveSpde, RejectsBadInput) {
  const SpatialGrid g(-1.0, 1.0, 16);
  const auto f = constant_field(0.0, 1.0, 0.0);
  EXPECT_THROW(solve_spde(*f, std::vector<double>(15, 0.5), g, scenario(1.0, 4, 1)), std::invalid_argument);
  std::vector<double> neg(16, 0.5);
  neg[3] = -0.1;
  EXPECT_THROW(solve_spde(*f, neg, g, scenario(1.0, 4, 1)), std::invalid_argument);
  EXPECT_THROW(solve_spde(*f, std::vector<double>(16, 0.5), g, nullptr), std::invalid_argument);
}

// Exact heat solution written into the flow; the residual is quadrature error only.
TEST(WeakResidual, ExactHeatFlowHasSmallResidual) {
  const double T = 1.0;
  const std::size_t steps = 1000;
  const SpatialGrid g(-8.0, 8.0, 1600);
  const auto sc = scenario(T, steps, 1);
  std::vector<std::size_t> idx(steps + 1);
  for (std::size_t k = 0; k <= steps; ++k) idx[k] = k;
  DensityFlow flow(g, sc, idx);
  for (std::size_t k = 0; k <= steps; ++k) {
    const double v = 0.09 + sc->grid().time(k);
    auto r = flow.density_mut(k);
    for (std::size_t j = 0; j < g.n_cells(); ++j) r[j] = gauss_cell(g.x_min() + j * g.dx(), g.dx(), 0.0, v);
  }
  const auto f = constant_field(0.0, 1.0, 0.0);
  for (double c : {-1.0, 0.0, 0.5}) {
    const auto phi = TestFunction::gaussian_bump({c}, 2.0, 0.6);
    double sup = 0.0;
    for (double r : weak_residual(flow, phi, *f)) sup = std::max(sup, std::abs(r));
    EXPECT_LT(sup, 5e-3) << "centre " << c;
  }
}

TEST(WeakResidual, DoubledDriftIsDetected) {
  const SpatialGrid g(-6.0, 6.0, 1200);
  const auto f = AffineMeanField::isotropic(1, 1.0, 0.0, 1.0, 1.0);
  const auto rho0 = density_from_law(InitialLaw::point_mass({0.0}), g, 0.25);
  const auto flow = solve_spde(*f, rho0, g, scenario(1.0, 1000, 17));
  const ScaledField sabotaged(f, 2.0, 1.0);
  double honest = 0.0, wrong = 0.0;
  for (double c : {-0.8, 0.8}) {
    const auto phi = TestFunction::gaussian_bump({c}, 2.0, 0.5);
    for (double r : weak_residual(flow, phi, *f)) honest = std::max(honest, std::abs(r));
    for (double r : weak_residual(flow, phi, sabotaged)) wrong = std::max(wrong, std::abs(r));
  }
  EXPECT_LT(honest, 5e-3);
  EXPECT_GT(wrong, 10.0 * honest);
}

TEST(WeakResidual, DisjointSupportGivesZero) {
  const SpatialGrid g(-4.0, 4.0, 400);
  const auto rho0 = density_from_law(InitialLaw::uniform({-1.0}, {1.0}), g, 0.0);
  const auto f = constant_field(0.0, 0.0, 0.0);
  const auto flow = solve_spde(*f, rho0, g, scenario(1.0, 50, 2));
  const auto phi = TestFunction::gaussian_bump({2.5}, 1.0, 0.5);
  for (double r : weak_residual(flow, phi, *f)) EXPECT_EQ(r, 0.0);
}

TEST(WeakResidual, RejectsSupportOutsideGrid) {
  const SpatialGrid g(-1.0, 1.0, 100);
  const auto f = constant_field(0.0, 1.0, 0.0);
  const auto flow = solve_spde(*f, density_from_law(InitialLaw::point_mass({0.0}), g, 0.1), g,
                               scenario(0.1, 10, 1));
  EXPECT_THROW(weak_residual(flow, TestFunction::gaussian_bump({0.5}, 1.0, 0.3), *f),
               std::invalid_argument);
}

TEST(MollifiedL2, IdenticalMeasuresGiveZero) {
  const SpatialGrid g(-3.0, 3.0, 300);
  const double pts[3] = {-0.5, 0.1, 0.7};
  const auto m = MeasureView::atoms(pts, 1);
  EXPECT_EQ(mollified_l2(m, m, 0.05, g), 0.0);
  EXPECT_THROW(mollified_l2(m, m, 0.0, g), std::invalid_argument);
}

// ||G_d - G_d(. - h)||^2 = 2 (1 - exp(-h^2 / (4 d))) / sqrt(4 pi d).
TEST(MollifiedL2, ShiftedSpikesMatchClosedForm) {
  const SpatialGrid g(-5.0, 5.0, 4000);
  for (double h : {0.05, 0.2, 1.0}) {
    for (double d : {0.01, 0.1}) {
      const double p0[1] = {0.0}, p1[1] = {h};
      const double got = mollified_l2(MeasureView::atoms(p0, 1), MeasureView::atoms(p1, 1), d, g);
      const double exact =
          std::sqrt(2.0 * (1.0 - std::exp(-h * h / (4.0 * d))) / std::sqrt(4.0 * std::numbers::pi * d));
      EXPECT_NEAR(got, exact, 1e-6 * exact) << "h=" << h << " d=" << d;
    }
  }
}

TEST(MollifiedDistance, SameFlowGivesZeroDistanceAndGrowingWeight) {
  const SpatialGrid g(-5.0, 5.0, 200);
  const auto f = AffineMeanField::isotropic(1, 1.0, 0.0, 0.5, 0.5);
  const auto flow = solve_spde(*f, density_from_law(InitialLaw::point_mass({0.0}), g, 0.3), g,
                               scenario(0.5, 50, 6));
  const auto rep = l2_mollified_distance(flow, flow, 0.05, *f);
  ASSERT_EQ(rep.times.size(), flow.n_slots());
  EXPECT_DOUBLE_EQ(rep.weight[0], 1.0);
  for (std::size_t k = 0; k < rep.times.size(); ++k) {
    EXPECT_EQ(rep.distance[k], 0.0);
    EXPECT_GE(rep.weight[k], 1.0);
    if (k > 0) EXPECT_GE(rep.weight[k], rep.weight[k - 1]);
  }
  EXPECT_THROW(l2_mollified_distance(flow, flow, -1.0, *f), std::invalid_argument);
}

// Two solutions of the same linear SPDE from different initial densities:
// ||Z_delta||^2 / Y_t does not increase beyond the discretisation tolerance.
TEST(MollifiedDistance, WeightedDistanceIsNonIncreasing) {
  const SpatialGrid g(-6.0, 6.0, 600);
  const auto f = constant_field(0.3, 0.8, 0.6);
  const auto sc = scenario(1.0, 500, 13);
  SpdeOptions o;
  o.record_stride = 10;
  const auto a = solve_spde(*f, density_from_law(InitialLaw::gaussian({-0.5}, {0.3}), g, 0.0), g, sc, o);
  const auto b = solve_spde(*f, density_from_law(InitialLaw::gaussian({0.4}, {0.5}), g, 0.0), g, sc, o);
  const auto rep = l2_mollified_distance(a, b, 0.05, *f);
  EXPECT_GT(rep.distance[0], 0.1);
  for (std::size_t k = 1; k < rep.normalised.size(); ++k)
    EXPECT_LE(rep.normalised[k], rep.normalised[k - 1] * (1.0 + 1e-2)) << "t=" << rep.times[k];
}

TEST(DensityCsv, RoundTripIsExact) {
  const SpatialGrid g(-3.0, 3.0, 60);
  const auto f = AffineMeanField::isotropic(1, 1.0, 0.0, 1.0, 1.0);
  std::vector<ScenarioPtr> scs = {scenario(0.2, 20, 9, 0), scenario(0.2, 20, 9, 3)};
  SpdeOptions o;
  o.record_stride = 5;
  std::vector<DensityFlow> flows;
  for (const auto& sc : scs)
    flows.push_back(solve_spde(*f, density_from_law(InitialLaw::point_mass({0.0}), g, 0.3), g, sc, o));
  const auto path = std::filesystem::temp_directory_path() / "mkv_density_roundtrip.csv";
  write_density_csv(flows, path.string());
  const auto back = read_density_csv(path.string(), scs);
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t k = 0; k < 2; ++k) {
    EXPECT_EQ(back[k].scenario().index(), scs[k]->index());
    EXPECT_EQ(back[k].time_indices(), flows[k].time_indices());
    EXPECT_EQ(back[k].grid().n_cells(), 60u);
    EXPECT_NEAR(back[k].grid().dx(), g.dx(), 1e-12);
    for (std::size_t s = 0; s < flows[k].n_slots(); ++s)
      for (std::size_t j = 0; j < 60; ++j) EXPECT_NEAR(back[k].density(s)[j], flows[k].density(s)[j], 1e-12);
  }
  EXPECT_THROW(read_density_csv(path.string(), {scs[0]}), PersistenceError);
  std::filesystem::remove(path);
}

// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "mkv/checked_io.h"
#include "mkv/coefficients.h"
#include "mkv/diagnostics.h"
#include "mkv/initial_law.h"
#include "mkv/particles.h"
#include "mkv/picard.h"
#include "mkv/scenario.h"

using namespace mkv;

namespace {

ScenarioPtr scenario(double T, std::size_t steps, std::uint64_t seed, std::uint64_t idx = 0) {
  return std::make_shared<const Scenario>(make_scenario(TimeGrid(T, steps), 1, seed, idx));
}

// Quadratic drift: the Euler iterates blow up in finite time.
struct Exploding final : CoefficientField {
  std::size_t dim() const override { return 1; }
  std::string name() const override { return "exploding"; }
  void drift(const EvalContext&, std::span<const double> x, std::span<double> o) const override {
    o[0] = x[0] * x[0] * 1e3;
  }
  void sigma(const EvalContext&, std::span<const double>, std::span<double> o) const override { o[0] = 0.0; }
  void gamma(const EvalContext&, std::span<const double>, std::span<double> o) const override { o[0] = 0.0; }
};

}  // namespace

TEST(Simulate, ZeroDynamicsStayPut) {
  const auto f = constant_field(0.0, 0.0, 0.0);
  const auto e = simulate_mckv(*f, InitialLaw::point_mass({1.25}), scenario(1.0, 50, 1), 64);
  for (std::size_t s = 0; s < e.n_slots(); ++s)
    for (double x : e.states(s)) EXPECT_EQ(x, 1.25);
}

TEST(Simulate, PureCommonNoiseShiftsInitialAtomsByB) {
  const auto f = constant_field(0.0, 0.0, 1.0);
  const auto sc = scenario(1.0, 200, 7);
  const auto e = simulate_mckv(*f, InitialLaw::gaussian({0.0}, {1.0}), sc, 300);
  const auto x0 = e.states(0);
  for (std::size_t s = 0; s < e.n_slots(); ++s) {
    const double b = sc->value(e.time_index(s))[0];
    for (std::size_t i = 0; i < e.n_particles(); ++i) EXPECT_NEAR(e.state(s, i)[0], x0[i] + b, 1e-12);
  }
  const auto m = empirical_from_particles(e, 200);
  EXPECT_EQ(m.size(), 300u);
}

TEST(Simulate, EmpiricalMeasureMeanIsArithmeticMean) {
  const auto f = AffineMeanField::isotropic(1, 1.0, 0.3, 0.5, 0.2);
  const auto e = simulate_mckv(*f, InitialLaw::uniform({-1.0}, {1.0}), scenario(0.5, 20, 4), 101);
  const auto m = empirical_from_particles(e, 20);
  const auto x = e.states(e.n_slots() - 1);
  double mean = 0.0;
  for (double v : x) mean += v;
  EXPECT_NEAR(m.view().mean()[0], mean / 101.0, 1e-14);
}

// Conditional OU: the conditional mean follows the Euler recursion of
// dm = -m dt + dB on the stored path; the variance is (1 - e^{-2t})/2.
TEST(Simulate, ConditionalOuMatchesKalmanBucyRecursion) {
  const auto f = AffineMeanField::isotropic(1, 1.0, 0.0, 1.0, 1.0);
  const std::size_t N = 10000, steps = 1000;
  const double dt = 1.0 / steps;
  for (std::uint64_t idx : {0u, 1u}) {
    const auto sc = scenario(1.0, steps, 99, idx);
    SimulationOptions o;
    o.record_stride = 250;
    const auto e = simulate_mckv(*f, InitialLaw::point_mass({0.0}), sc, N, o);
    const auto mom = node_moments(e);
    double m = 0.0;
    std::size_t slot = 1;
    for (std::size_t k = 0; k < steps; ++k) {
      m += -m * dt + sc->increment(k)[0];
      if ((k + 1) % 250 == 0) {
        const double t = (k + 1) * dt, v = 0.5 * (1.0 - std::exp(-2.0 * t));
        EXPECT_NEAR(mom.mean[slot], m, 3.0 * std::sqrt(v / N) + 5.0 * dt) << "t=" << t;
        EXPECT_NEAR(mom.variance[slot], v, 0.05 * v) << "t=" << t;
        ++slot;
      }
    }
  }
}

TEST(RandomCoefficients, PathValuedDriftIntegratesTheStoredPath) {
  auto f = std::make_shared<ScenarioRandomField>(1);
  f->c_path = 1.0;
  f->s0 = 0.0;
  const std::size_t steps = 1000;
  const auto sc = scenario(1.0, steps, 12);
  const auto e = simulate_random_coeff(*f, InitialLaw::point_mass({0.5}), sc, 4);
  double trap = 0.0;
  for (std::size_t k = 0; k < steps; ++k) trap += 0.5 * (sc->value(k)[0] + sc->value(k + 1)[0]) / steps;
  // Left-point Euler differs from the trapezoid by exactly B_T dt / 2.
  const double bound = std::abs(sc->value(steps)[0]) / (2.0 * steps) + 1e-12;
  EXPECT_NEAR(e.state(e.n_slots() - 1, 0)[0], 0.5 + trap, bound);
}

TEST(RandomCoefficients, OmegaFreeFieldIsBitIdenticalToMckv) {
  auto f = std::make_shared<ScenarioRandomField>(1);
  f->c_x = -0.7;
  f->c_sin = 0.3;
  f->s0 = 0.8;
  f->g0 = 0.4;
  const auto sc = scenario(1.0, 100, 5);
  const auto a = simulate_random_coeff(*f, InitialLaw::gaussian({0.0}, {1.0}), sc, 200);
  const auto b = simulate_mckv(*f, InitialLaw::gaussian({0.0}, {1.0}), sc, 200);
  for (std::size_t s = 0; s < a.n_slots(); ++s) {
    const auto x = a.states(s), y = b.states(s);
    EXPECT_TRUE(std::equal(x.begin(), x.end(), y.begin()));
  }
}

// b = sin x, sigma = 1 against a ten times finer reference.
TEST(RandomCoefficients, SelfConvergenceOfTheMean) {
  const auto f = scalar_field([](const EvalContext&, double x) { return std::sin(x); },
                              [](const EvalContext&, double) { return 1.0; },
                              [](const EvalContext&, double) { return 0.0; });
  const std::size_t N = 100000;
  auto mean_sd = [&](std::size_t steps, std::uint64_t seed) {
    SimulationOptions o;
    o.record_stride = steps;
    const auto e = simulate_random_coeff(*f, InitialLaw::gaussian({0.5}, {0.5}), scenario(1.0, steps, seed), N, o);
    const auto m = node_moments(e);
    return std::pair{m.mean.back(), std::sqrt(m.variance.back())};
  };
  const auto [coarse, sd_c] = mean_sd(50, 1);
  const auto [fine, sd_f] = mean_sd(500, 2);
  EXPECT_NEAR(coarse, fine, 3.0 * std::hypot(sd_c, sd_f) / std::sqrt(N));
}

TEST(Simulate, DeterministicAcrossWorkerCounts) {
  const auto f = AffineMeanField::isotropic(1, 0.5, 0.5, 0.7, 0.3);
  const auto sc = scenario(1.0, 100, 3);
  SimulationOptions one, four;
  one.workers = 1;
  four.workers = 4;
  const auto a = simulate_mckv(*f, InitialLaw::gaussian({0.0}, {1.0}), sc, 777, one);
  const auto b = simulate_mckv(*f, InitialLaw::gaussian({0.0}, {1.0}), sc, 777, four);
  const auto c = simulate_mckv(*f, InitialLaw::gaussian({0.0}, {1.0}), sc, 777, one);
  for (std::size_t s = 0; s < a.n_slots(); ++s) {
    const auto x = a.states(s), y = b.states(s), z = c.states(s);
    EXPECT_TRUE(std::equal(x.begin(), x.end(), y.begin()));
    EXPECT_TRUE(std::equal(x.begin(), x.end(), z.begin()));
  }
}

// Particle i's path does not depend on how many particles follow it when
// the field ignores the measure.
TEST(Simulate, ParticleStreamsAreIndexedNotPositional) {
  const auto f = constant_field(0.1, 1.0, 0.5);
  const auto sc = scenario(1.0, 40, 8);
  const auto small = simulate_mckv(*f, InitialLaw::gaussian({0.0}, {1.0}), sc, 10);
  const auto big = simulate_mckv(*f, InitialLaw::gaussian({0.0}, {1.0}), sc, 50);
  for (std::size_t s = 0; s < small.n_slots(); ++s)
    for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(small.state(s, i)[0], big.state(s, i)[0]);
}

TEST(Simulate, NonFiniteStateAbortsWithStepAndCoefficient) {
  Exploding f;
  try {
    simulate_mckv(f, InitialLaw::point_mass({1.0}), scenario(1.0, 100, 1), 4);
    FAIL() << "expected SimulationError";
  } catch (const SimulationError& e) {
    EXPECT_GT(e.step(), 0u);
    EXPECT_LT(e.step(), 100u);
    EXPECT_FALSE(e.coefficient().empty());
  }
}

TEST(Picard, ZeroCoefficientsConvergeAtFirstIteration) {
  const auto f = constant_field(0.0, 0.0, 0.0);
  const auto r = picard_solve(*f, InitialLaw::gaussian({0.0}, {1.0}), scenario(1.0, 100, 2), 200);
  ASSERT_TRUE(r.converged);
  EXPECT_EQ(r.iterations, 1u);
  ASSERT_EQ(r.gaps.size(), 1u);
  EXPECT_EQ(r.gaps[0], 0.0);
}

TEST(Picard, LinearDecayMatchesExponential) {
  const auto f = AffineMeanField::isotropic(1, 1.0, 0.0, 0.0, 0.0);
  const std::size_t steps = 1000;
  const auto r = picard_solve(*f, InitialLaw::point_mass({1.0}), scenario(1.0, steps, 2), 8);
  ASSERT_TRUE(r.converged);
  for (std::size_t k = 0; k <= steps; k += 50)
    EXPECT_NEAR(r.limit.state(r.limit.slot_of(k), 0)[0], std::exp(-static_cast<double>(k) / steps), 1.0 / steps);
}

TEST(Picard, ContractionRateOnShortSegment) {
  const auto f = AffineMeanField::isotropic(1, 1.0, 0.0, 0.1, 0.0);
  const auto r = picard_solve(*f, InitialLaw::gaussian({0.0}, {1.0}), scenario(0.5, 200, 3), 500);
  ASSERT_TRUE(r.converged);
  for (std::size_t k = 0; k < r.ratios.size(); ++k)
    if (r.gaps[k] > 1e-8) EXPECT_LE(r.ratios[k], 0.6) << "n=" << k + 2;
  for (double g : r.gaps) EXPECT_GE(g, 0.0);
  EXPECT_LT(r.gaps.back(), 1e-8);
}

TEST(Diagnostics, BoundedCoefficientsAreNotFlagged) {
  const auto f = AffineMeanField::isotropic(1, 1.0, 0.0, 1.0, 1.0);
  SimulationOptions o;
  o.keep_noise = true;
  const auto e = simulate_mckv(*f, InitialLaw::gaussian({0.0}, {0.5}), scenario(1.0, 200, 5), 2000, o);
  const auto rep = diagnostics(e, *f, 2.0);
  EXPECT_TRUE(std::isfinite(rep.integrability.estimate));
  EXPECT_FALSE(rep.integrability.flagged);
  ASSERT_EQ(rep.tests.size(), 200u);
  EXPECT_LE(rep.fraction_below(0.01), 0.03);
}

TEST(Diagnostics, ReusedCommonStreamIsDetected) {
  const auto f = AffineMeanField::isotropic(1, 1.0, 0.0, 1.0, 1.0);
  SimulationOptions o;
  o.keep_noise = true;
  o.wiring = NoiseWiring::shared_with_common;
  const auto e = simulate_mckv(*f, InitialLaw::gaussian({0.0}, {0.5}), scenario(1.0, 200, 5), 2000, o);
  EXPECT_LT(diagnostics(e, *f, 2.0).min_p_value(), 1e-6);
}

TEST(Export, EnsembleCsvLayoutAndSummary) {
  const auto f = constant_field(0.0, 1.0, 0.0);
  SimulationOptions o;
  o.record_stride = 5;
  const auto e = simulate_mckv(*f, InitialLaw::point_mass({0.0}), scenario(1.0, 10, 1, 4), 3, o);
  const auto path = (std::filesystem::temp_directory_path() / "mkv_ensemble.csv").string();
  write_ensemble_csv({e}, path);
  const std::string body = read_checked(path);
  EXPECT_EQ(body.substr(0, body.find('\n')), "scenario_index,time_index,particle_index,x_1");
  EXPECT_EQ(std::count(body.begin(), body.end(), '\n'), 1 + 3 * 3);
  EXPECT_NE(ensemble_summary_json({e}).find("conditional_mean"), std::string::npos);
}

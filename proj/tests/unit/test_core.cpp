// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <cstring>
#include <fstream>
#include <numeric>

#include "mkv/checked_io.h"
#include "mkv/measure.h"
#include "mkv/rng.h"
#include "mkv/scenario.h"
#include "mkv/test_function.h"
#include "mkv/wasserstein.h"

using namespace mkv;

namespace {

// Reference SplitMix64 finaliser, written out independently of the library.
std::uint64_t ref_mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::filesystem::path temp_file(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "mkv_core_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST(Rng, SplitMixFrozenValues) {
  // First output of SplitMix64 seeded with 0, a published reference value.
  RandomStream r(0);
  EXPECT_EQ(r(), 0xe220a8397b1dcdafULL);
  EXPECT_EQ(mix64(1), 0x5692161d100b05e5ULL);
  EXPECT_EQ(stream_seed(42, 3, 7), 0x4c5f9ed7d4c3cb75ULL);
  EXPECT_EQ(stream_seed(42, 3, 7), ref_mix(ref_mix(42 ^ ref_mix(3)) ^ ref_mix(8)));
}

TEST(Rng, StreamsDifferAcrossParticlesAndLanes) {
  std::vector<std::uint64_t> seen;
  for (std::uint64_t s = 0; s < 8; ++s)
    for (std::uint64_t p = 0; p < 64; ++p)
      for (auto lane : {Lane::brownian, Lane::initial, Lane::auxiliary})
        seen.push_back(lane_seed(stream_seed(9, s, p), lane));
  std::sort(seen.begin(), seen.end());
  EXPECT_EQ(std::adjacent_find(seen.begin(), seen.end()), seen.end());
}

TEST(Rng, NormalMomentsMatchStandardGaussian) {
  RandomStream r(123);
  const int n = 200000;
  double s1 = 0.0, s2 = 0.0, s4 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    s1 += z;
    s2 += z * z;
    s4 += z * z * z * z;
  }
  EXPECT_NEAR(s1 / n, 0.0, 4.0 / std::sqrt(n));
  EXPECT_NEAR(s2 / n, 1.0, 4.0 * std::sqrt(2.0 / n));
  EXPECT_NEAR(s4 / n, 3.0, 4.0 * std::sqrt(96.0 / n));
}

TEST(TimeGrid, NodesAndRejection) {
  TimeGrid g(1.0, 4);
  EXPECT_EQ(g.n_nodes(), 5u);
  EXPECT_DOUBLE_EQ(g.dt(), 0.25);
  for (std::size_t k = 0; k < g.n_steps(); ++k) EXPECT_LT(g.time(k), g.time(k + 1));
  EXPECT_EQ(g.time(4), 1.0);
  EXPECT_THROW(TimeGrid(1.0, 0), std::invalid_argument);
  EXPECT_THROW(TimeGrid(0.0, 3), std::invalid_argument);
}

TEST(Scenario, SingleStepHasTwoNodesStartingAtZero) {
  const auto s = make_scenario(TimeGrid(1.0, 1), 1, 1, 0);
  EXPECT_EQ(s.grid().n_nodes(), 2u);
  EXPECT_EQ(s.value(0)[0], 0.0);
  EXPECT_EQ(s.value(1)[0], s.increment(0)[0]);
}

TEST(Scenario, DeterministicAndDistinctAcrossIndices) {
  const TimeGrid g(1.0, 50);
  const auto a = make_scenario(g, 2, 77, 5), b = make_scenario(g, 2, 77, 5), c = make_scenario(g, 2, 77, 6);
  EXPECT_TRUE(a.same_path(b));
  EXPECT_FALSE(a.same_path(c));
}

TEST(Scenario, PathIsCumulativeSumOfIncrements) {
  const auto s = make_scenario(TimeGrid(2.0, 20), 3, 4, 1);
  std::vector<double> acc(3, 0.0);
  for (std::size_t k = 0; k < 20; ++k) {
    for (std::size_t j = 0; j < 3; ++j) acc[j] += s.increment(k)[j];
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(s.value(k + 1)[j], acc[j], 1e-12);
  }
}

TEST(Scenario, TerminalValueCltOverManyScenarios) {
  const TimeGrid g(2.0, 4);
  const std::size_t n = 100000;
  double sum = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto s = make_scenario(g, 1, 2024, i);
    const double b = s.value(4)[0];
    sum += b;
    sq += b * b;
  }
  EXPECT_LT(std::abs(sum / n), 3.0 * std::sqrt(2.0 / n));
  EXPECT_NEAR(sq / n, 2.0, 4.0 * 2.0 * std::sqrt(2.0 / n));
}

TEST(Scenario, CoarseningSumsIncrements) {
  const auto s = make_scenario(TimeGrid(1.0, 12), 1, 3, 2);
  const auto c = s.coarsened(3);
  ASSERT_EQ(c.grid().n_steps(), 4u);
  for (std::size_t k = 0; k <= 4; ++k) EXPECT_NEAR(c.value(k)[0], s.value(3 * k)[0], 1e-14);
  EXPECT_THROW(s.coarsened(5), std::invalid_argument);
}

TEST(Persistence, ScenarioRoundTripIsBitIdentical) {
  const auto s = make_scenario(TimeGrid(1.0, 333), 2, 99, 17);
  const auto path = temp_file("scenario.csv");
  save_scenario(s, path);
  const auto r = load_scenario(path);
  EXPECT_TRUE(s.same_path(r));
  EXPECT_EQ(r.seed(), s.seed());
  EXPECT_EQ(r.index(), s.index());
  for (std::size_t k = 0; k < s.increments().size(); ++k)
    EXPECT_EQ(std::memcmp(&s.increments()[k], &r.increments()[k], sizeof(double)), 0);
}

TEST(Persistence, TruncatedAndCorruptedFilesAreRejected) {
  const auto s = make_scenario(TimeGrid(1.0, 40), 1, 5, 0);
  const auto path = temp_file("trunc.csv");
  save_scenario(s, path);
  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  for (std::size_t cut : {bytes.size() - 1, bytes.size() / 2, std::size_t{10}}) {
    std::ofstream(path, std::ios::binary) << bytes.substr(0, cut);
    EXPECT_THROW(load_scenario(path), PersistenceError) << "cut at " << cut;
  }
  std::string flipped = bytes;
  flipped[bytes.size() / 2] = flipped[bytes.size() / 2] == '1' ? '2' : '1';
  std::ofstream(path, std::ios::binary) << flipped;
  EXPECT_THROW(load_scenario(path), PersistenceError);
}

TEST(Persistence, ExactDecimalRoundTrips) {
  RandomStream r(8);
  for (int i = 0; i < 1000; ++i) {
    const double v = std::ldexp(r.uniform(-1.0, 1.0), static_cast<int>(r.below(200)) - 100);
    EXPECT_EQ(parse_double(exact(v)), v);
  }
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
}

TEST(TestFunctions, ZeroOutsideSupport) {
  for (const auto& phi : {TestFunction::gaussian_bump({0.5, -1.0}, 1.5, 0.7),
                          TestFunction::polynomial_bump({0.5, -1.0}, 1.5, 0.3, {1.0, 2.0})}) {
    const std::vector<double> x{0.5 + 1.2, -1.0 + 0.95};  // |x - c| > 1.5
    const auto j = phi.jet(x);
    EXPECT_EQ(j.value, 0.0);
    for (double g : j.gradient) EXPECT_EQ(g, 0.0);
    for (double h : j.hessian) EXPECT_EQ(h, 0.0);
  }
}

TEST(TestFunctions, GaussianBumpCentreIsCritical) {
  const auto phi = TestFunction::gaussian_bump({1.0, 2.0, 3.0}, 2.0, 0.5);
  const auto j = phi.jet(std::vector<double>{1.0, 2.0, 3.0});
  for (double g : j.gradient) EXPECT_NEAR(g, 0.0, 1e-15);
  EXPECT_GT(j.value, 0.0);
}

// Property: gradient and Hessian agree with central differences at random
// interior points.
TEST(TestFunctions, DerivativesMatchFiniteDifferences) {
  RandomStream r(31);
  const std::vector<TestFunction> fns{TestFunction::gaussian_bump({0.2, -0.4}, 1.3, 0.6),
                                      TestFunction::polynomial_bump({0.2, -0.4}, 1.3, 0.2, {0.5, -1.0, 0.3})};
  const double h = 1e-5;
  for (const auto& phi : fns) {
    int checked = 0;
    while (checked < 100) {
      std::vector<double> x{0.2 + r.uniform(-1.0, 1.0), -0.4 + r.uniform(-1.0, 1.0)};
      const double dist = std::hypot(x[0] - 0.2, x[1] + 0.4);
      if (dist > 1.2 || std::abs(dist - 0.2) < 0.02) continue;  // stay off the seams
      ++checked;
      const auto j = phi.jet(x);
      for (std::size_t a = 0; a < 2; ++a) {
        auto xp = x, xm = x;
        xp[a] += h;
        xm[a] -= h;
        const double fd = (phi.value(xp) - phi.value(xm)) / (2 * h);
        EXPECT_NEAR(j.gradient[a], fd, 1e-6 * std::max(1.0, std::abs(fd)));
        const auto jp = phi.jet(xp), jm = phi.jet(xm);
        for (std::size_t b = 0; b < 2; ++b) {
          const double fdh = (jp.gradient[b] - jm.gradient[b]) / (2 * h);
          EXPECT_NEAR(j.hessian[a * 2 + b], fdh, 1e-5 * std::max(1.0, std::abs(fdh)));
        }
      }
    }
  }
}

TEST(Measures, EmpiricalMassAndMean) {
  const EmpiricalMeasure m({0.0, 2.0, 4.0, 6.0}, 1);
  const auto v = m.view();
  EXPECT_NEAR(v.mass(), 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(v.mean()[0], 3.0);
  EXPECT_DOUBLE_EQ(v.central_moment(2), 5.0);
  const EmpiricalMeasure w({0.0, 1.0}, 1, {3.0, 1.0});
  EXPECT_NEAR(w.view().mass(), 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(w.view().mean()[0], 0.25);
  EXPECT_THROW(EmpiricalMeasure({0.0, 1.0}, 1, {1.0, -1.0}), std::invalid_argument);
  EXPECT_THROW(EmpiricalMeasure({}, 1), std::invalid_argument);
}

TEST(Measures, PairWithConstantOnSupportGivesMass) {
  // The polynomial bump with plateau 1 equals its constant polynomial there.
  const auto phi = TestFunction::polynomial_bump({0.0}, 3.0, 1.0, {2.5});
  const EmpiricalMeasure m({-0.9, -0.2, 0.4, 0.99}, 1);
  EXPECT_NEAR(m.view().pair(phi), 2.5, 1e-14);
  std::vector<double> centers{-0.5, 0.0, 0.5}, rho{0.5, 1.0, 0.5};
  const auto cells = MeasureView::cells(centers, rho, 0.5);
  EXPECT_NEAR(cells.pair(phi), 2.5 * cells.mass(), 1e-14);
}

TEST(Measures, KdeIsNonNegative) {
  RandomStream r(2);
  std::vector<double> pts(200);
  for (double& p : pts) p = r.normal();
  const auto m = MeasureView::atoms(pts, 1);
  for (int i = 0; i < 100; ++i) {
    const double x = r.uniform(-8.0, 8.0);
    EXPECT_GE(m.kde(std::span<const double>(&x, 1), 0.3), 0.0);
  }
}

TEST(Wasserstein, IdentityPointMassesAndUniforms) {
  std::vector<double> a{0.3, -1.0, 2.0, 5.0};
  const auto mu = MeasureView::atoms(a, 1);
  EXPECT_NEAR(wasserstein1_1d(mu, mu, 1000), 0.0, 1e-12);

  std::vector<double> z{0.0}, o{1.0};
  EXPECT_NEAR(wasserstein1_1d(MeasureView::atoms(z, 1), MeasureView::atoms(o, 1), 100), 1.0, 1e-12);

  RandomStream r(41);
  std::vector<double> u1(100000), u2(100000);
  for (auto& v : u1) v = r.uniform();
  for (auto& v : u2) v = 2.0 * r.uniform();
  // int_0^1 |u - 2u| du = 1/2.
  EXPECT_NEAR(wasserstein1_1d(MeasureView::atoms(u1, 1), MeasureView::atoms(u2, 1), 4096), 0.5, 0.02);
}

TEST(Wasserstein, TranslationGivesShift) {
  RandomStream r(3);
  std::vector<double> a(500), b(500);
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = r.normal();
    b[i] = a[i] + 0.37;
  }
  EXPECT_NEAR(wasserstein1_1d(MeasureView::atoms(a, 1), MeasureView::atoms(b, 1), 5000), 0.37, 1e-12);
}

// Property: symmetric, non-negative, triangle inequality up to 2/n_quantiles.
TEST(Wasserstein, MetricPropertiesOnRandomTriples) {
  RandomStream r(5);
  const std::size_t nq = 512;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::vector<double>> s(3);
    for (auto& v : s) {
      v.resize(20 + r.below(200));
      const double m = r.uniform(-2, 2), sd = r.uniform(0.1, 2);
      for (auto& x : v) x = m + sd * r.normal();
    }
    const auto a = MeasureView::atoms(s[0], 1), b = MeasureView::atoms(s[1], 1), c = MeasureView::atoms(s[2], 1);
    const double ab = wasserstein1_1d(a, b, nq), ba = wasserstein1_1d(b, a, nq);
    const double bc = wasserstein1_1d(b, c, nq), ac = wasserstein1_1d(a, c, nq);
    EXPECT_GE(ab, 0.0);
    EXPECT_NEAR(ab, ba, 1e-12);
    EXPECT_LE(ac, ab + bc + 2.0 / nq);
  }
}

TEST(Wasserstein, RejectsBadInput) {
  std::vector<double> p2{0.0, 1.0, 2.0, 3.0};
  const auto m2 = MeasureView::atoms(p2, 2);
  const auto m1 = MeasureView::atoms(p2, 1);
  EXPECT_THROW(wasserstein1_1d(m2, m2, 10), std::invalid_argument);
  EXPECT_THROW(wasserstein1_1d(m1, m1, 1), std::invalid_argument);
}

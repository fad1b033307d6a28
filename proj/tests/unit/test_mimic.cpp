// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "mkv/mimic.h"
#include "mkv/rng.h"

using namespace mkv;

namespace {

double frobenius_gap(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

std::vector<double> square(const std::vector<double>& r, std::size_t d) {
  std::vector<double> out(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j)
      for (std::size_t k = 0; k < d; ++k) out[i * d + j] += r[i * d + k] * r[k * d + j];
  return out;
}

// b = -X + xi, xi ~ N(0, 1) fresh per particle and step; sigma = gamma = 1.
MimickingSystem random_drift() {
  auto f = std::make_shared<CompositeField>(
      1, [](const EvalContext& c, std::span<const double> x, std::span<double> o) { o[0] = -x[0] + c.aux[0]; },
      [](const EvalContext&, std::span<const double>, std::span<double> o) { o[0] = 1.0; },
      [](const EvalContext&, std::span<const double>, std::span<double> o) { o[0] = 1.0; });
  f->n_aux = 1;
  f->label = "random_drift";
  return {"random_drift", f, InitialLaw::point_mass({0.0}), constant_field(0.0, 0.0, 1.0)};
}

}  // namespace

TEST(PsdSqrt, IdentityAndDiagonal) {
  const std::vector<double> id = {1, 0, 0, 1};
  EXPECT_LT(frobenius_gap(psd_sqrt(id, 2).root, id), 1e-15);
  const auto r = psd_sqrt(std::vector<double>{4, 0, 0, 9}, 2);
  EXPECT_NEAR(r.root[0], 2.0, 1e-14);
  EXPECT_NEAR(r.root[3], 3.0, 1e-14);
  EXPECT_NEAR(r.root[1], 0.0, 1e-14);
  EXPECT_EQ(r.clipped, 0.0);
}

TEST(PsdSqrt, RandomSpdSquaresBack) {
  RandomStream rng(5);
  for (int draw = 0; draw < 100; ++draw) {
    std::vector<double> q(9), m(9, 0.0);
    for (double& v : q) v = rng.normal();
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j)
        for (std::size_t k = 0; k < 3; ++k) m[i * 3 + j] += q[k * 3 + i] * q[k * 3 + j];
    const auto r = psd_sqrt(m, 3);
    EXPECT_LT(frobenius_gap(square(r.root, 3), m), 1e-10) << "draw " << draw;
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < i; ++j) EXPECT_NEAR(r.root[i * 3 + j], r.root[j * 3 + i], 1e-14);
  }
}

TEST(PsdSqrt, ClipsNegativeEigenvaluesAndRejectsAsymmetry) {
  const auto r = psd_sqrt(std::vector<double>{1, 0, 0, -0.25}, 2);
  EXPECT_NEAR(r.clipped, 0.25, 1e-15);
  EXPECT_NEAR(r.root[0], 1.0, 1e-15);
  EXPECT_EQ(r.root[3], 0.0);
  EXPECT_THROW(psd_sqrt(std::vector<double>{1, 0.1, 0.2, 1}, 2), std::invalid_argument);
}

// a_hat - gamma gamma^T, clipped and square-rooted, recombines to the clipped a_hat.
TEST(PsdSqrt, ResidualDiffusionChainRecombines) {
  RandomStream rng(6);
  for (int draw = 0; draw < 50; ++draw) {
    std::vector<double> a(4), g(4), gg(4, 0.0), diff(4);
    const double u = rng.normal(), v = rng.normal(), w = rng.normal();
    a = {u * u + 0.1, u * v, u * v, v * v + w * w};
    for (double& x : g) x = 0.5 * rng.normal();
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 2; ++j)
        for (std::size_t k = 0; k < 2; ++k) gg[i * 2 + j] += g[i * 2 + k] * g[j * 2 + k];
    for (std::size_t i = 0; i < 4; ++i) diff[i] = a[i] - gg[i];
    diff[1] = diff[2] = 0.5 * (diff[1] + diff[2]);
    const auto r = psd_sqrt(diff, 2);
    const auto s = square(r.root, 2);
    // The clipped target: diff with its negative eigenvalues removed.
    const auto again = psd_sqrt(s, 2);
    EXPECT_LE(again.clipped, 1e-12);
    if (r.clipped == 0.0) {
      std::vector<double> back(4);
      for (std::size_t i = 0; i < 4; ++i) back[i] = s[i] + gg[i];
      std::vector<double> target = a;
      target[1] = target[2] = 0.5 * (a[1] + a[2]);
      EXPECT_LT(frobenius_gap(back, target), 1e-8);
    }
    const double tr = s[0] + s[3], det = s[0] * s[3] - s[1] * s[2];
    EXPECT_GE(tr, -1e-12);
    EXPECT_GE(det, -1e-12);
  }
}

TEST(FeatureMap, MomentsAndConstant) {
  const double pts[4] = {-1.0, 0.0, 1.0, 2.0};
  const auto m = MeasureView::atoms(pts, 1);
  const auto f = FeatureMap::moments(4)(m);
  ASSERT_EQ(f.size(), 4u);
  EXPECT_DOUBLE_EQ(f[0], 0.5);
  EXPECT_DOUBLE_EQ(f[1], 1.25);
  EXPECT_NEAR(f[2], 0.0, 1e-15);
  EXPECT_DOUBLE_EQ(f[3], (5.0625 + 0.0625 + 0.0625 + 5.0625) / 4.0);
  EXPECT_EQ(FeatureMap::constant()(m), std::vector<double>{0.0});
  const auto fb = FeatureMap::moments_and_basis(2, dyadic_bump_basis(-2.0, 2.0, 1));
  EXPECT_EQ(fb.size(), 3u);
  EXPECT_EQ(fb.names().size(), 3u);
}

// b is a measurable function of (x, mean): the projection reproduces it.
TEST(Projection, ReproducesMeasurableDrift) {
  RandomStream rng(8);
  ProjectionSlice slice;
  slice.t = 0.5;
  slice.n_features = 1;
  const std::size_t groups = 41, per = 2000;
  for (std::size_t g = 0; g < groups; ++g) {
    const double mean = -1.0 + 2.0 * g / (groups - 1.0);
    const double f[1] = {mean};
    for (std::size_t i = 0; i < per; ++i) {
      const double x = mean + rng.normal();
      slice.append(g, x, f, -x + 0.5 * mean, 1.0);
    }
  }
  ProjectionOptions o;
  o.x_bandwidth = 0.1;
  o.feature_bandwidths = {0.1};
  const auto proj = markovian_projection({slice}, o);
  for (double mean : {-0.5, 0.0, 0.45}) {
    const double f[1] = {mean};
    for (double x : {mean - 1.0, mean, mean + 1.0}) {
      const auto v = proj.evaluate(0.5, f, x);
      const double b = -x + 0.5 * mean;
      EXPECT_LT(std::abs(v.b - b), 0.05 * std::max(1.0, std::abs(b))) << "x=" << x << " mean=" << mean;
      EXPECT_NEAR(v.ss, 1.0, 1e-12);
      EXPECT_FALSE(v.extrapolated);
    }
  }
}

// E[c + xi | X, mu] = c with xi independent of everything.
TEST(Projection, IndependentNoiseAveragesOut) {
  RandomStream rng(9);
  ProjectionSlice slice;
  slice.t = 1.0;
  slice.n_features = 1;
  const std::size_t n = 100000;
  const double f[1] = {0.0};
  for (std::size_t i = 0; i < n; ++i) slice.append(0, rng.normal(), f, 2.0 + rng.normal(), 1.0);
  ProjectionOptions o;
  o.mode = ProjectionMode::classical;
  const auto proj = markovian_projection({slice}, o);
  const double h = proj.x_bandwidth(0);
  ASSERT_GT(h, 0.0);
  // NW variance at x with a Gaussian kernel: 1 / (n h p(x) 2 sqrt(pi)).
  for (double x = -1.5; x <= 1.5 + 1e-9; x += 0.5) {
    const double p = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
    const double factor = 1.0 / std::sqrt(h * p * 2.0 * std::sqrt(M_PI));
    EXPECT_LT(std::abs(proj.evaluate(1.0, f, x).b - 2.0), 3.0 / std::sqrt(double(n)) * factor) << "x=" << x;
  }
}

// sigma = |W_t| on an OU particle: a_hat at t = 1 against binned conditional
// means of W^2. These are not t: particles with small |W| move less and
// crowd near the centre, so E[W_1^2 | X_1 = 0] is close to 0.5.
TEST(Projection, PathDependentVolatilityMatchesBinnedMeans) {
  auto f = std::make_shared<CompositeField>(
      1, [](const EvalContext&, std::span<const double> x, std::span<double> o) { o[0] = -x[0]; },
      [](const EvalContext& c, std::span<const double>, std::span<double> o) { o[0] = std::abs(c.own_w[0]); },
      [](const EvalContext&, std::span<const double>, std::span<double> o) { o[0] = 0.0; });
  f->own_path = true;
  const auto scs = make_scenarios(TimeGrid(1.0, 100), 1, 4, 0, 10);
  std::vector<ProjectionSlice> slices;
  HarvestSpec spec;
  spec.stride = 50;
  spec.features = FeatureMap::constant();
  simulate_and_harvest(*f, InitialLaw::gaussian({0.0}, {0.5}), scs, 10000, {}, spec, slices);
  ASSERT_EQ(slices.back().time_index, 100u);
  const auto& last = slices.back();
  ASSERT_EQ(last.size(), 100000u);
  ProjectionOptions o;
  o.mode = ProjectionMode::classical;
  const auto proj = markovian_projection(slices, o);
  const double feat[1] = {0.0};
  for (double x : {-0.5, 0.0, 0.5}) {
    double s = 0.0, c = 0.0;
    for (std::size_t r = 0; r < last.size(); ++r)
      if (std::abs(last.x[r] - x) < 0.05) {
        s += last.ss[r];
        c += 1.0;
      }
    const double binned = s / c;
    const double est = proj.evaluate(1.0, feat, x).ss;
    EXPECT_NEAR(est, binned, 0.1 * binned) << "x=" << x;
  }
}

TEST(Projection, SparseSliceFallsBackToNeighbour) {
  RandomStream rng(10);
  std::vector<ProjectionSlice> slices(3);
  const double f[1] = {0.0};
  for (std::size_t k = 0; k < 3; ++k) {
    slices[k].t = 0.5 * k;
    slices[k].time_index = k;
    slices[k].n_features = 1;
    const std::size_t n = k == 1 ? 10 : 1000;
    for (std::size_t i = 0; i < n; ++i) slices[k].append(0, rng.normal(), f, 1.0 + k, 1.0);
  }
  const auto proj = markovian_projection(slices);
  EXPECT_EQ(proj.unusable_slices(), 1u);
  EXPECT_FALSE(proj.slice_usable(1));
  const auto table = proj.table(0.5, f);
  EXPECT_TRUE(table.slice_fallback());
  EXPECT_TRUE(table(50.0).extrapolated);
}

// Regression residuals are orthogonal to constants slice by slice.
TEST(Projection, TowerPropertyOnHarvestedSlices) {
  const auto sys = random_drift();
  const auto scs = make_scenarios(TimeGrid(1.0, 100), 1, 11, 0, 16);
  std::vector<ProjectionSlice> slices;
  HarvestSpec spec;
  spec.stride = 25;
  simulate_and_harvest(*sys.original, sys.init, scs, 1000, {}, spec, slices);
  const auto proj = markovian_projection(slices);
  for (std::size_t k = 1; k < slices.size(); ++k) {
    const auto& s = slices[k];
    std::vector<double> scen_mean(16, 0.0), count(16, 0.0);
    for (std::size_t r = 0; r < s.size(); ++r) {
      const auto smp = sample_at(s, r);
      const double resid = smp.b - proj.evaluate(smp.t, smp.features, smp.x).b;
      scen_mean[smp.scenario_index] += resid;
      count[smp.scenario_index] += 1.0;
    }
    double m = 0.0, ss = 0.0;
    for (std::size_t g = 0; g < 16; ++g) m += (scen_mean[g] /= count[g]) / 16.0;
    for (std::size_t g = 0; g < 16; ++g) ss += (scen_mean[g] - m) * (scen_mean[g] - m);
    const double se = std::sqrt(ss / 15.0 / 16.0);
    EXPECT_LE(std::abs(m), 3.0 * se) << "slice t=" << s.t;
  }
}

TEST(Mimicking, ClassicalEqualsConditionalWithConstantFeatures) {
  MimickingConfig cfg;
  cfg.n_scenarios = 6;
  cfg.n_particles = 300;
  cfg.n_steps = 40;
  cfg.enrichment_bumps = 0;
  cfg.seed = 3;
  cfg.features = FeatureMap::constant();
  cfg.projection.mode = ProjectionMode::classical;
  const auto a = run_mimicking_experiment(random_drift(), cfg);
  cfg.projection.mode = ProjectionMode::conditional;
  const auto b = run_mimicking_experiment(random_drift(), cfg);
  ASSERT_EQ(a.times.size(), b.times.size());
  for (std::size_t k = 0; k < a.times.size(); ++k) {
    EXPECT_EQ(a.times[k].pooled_w1_fresh, b.times[k].pooled_w1_fresh);
    EXPECT_EQ(a.times[k].pooled_w1_matched, b.times[k].pooled_w1_matched);
    for (std::size_t j = 0; j < a.times[k].battery.size(); ++j)
      EXPECT_EQ(a.times[k].battery[j].mimicked, b.times[k].battery[j].mimicked);
  }
}

// Linear benchmark with an independent drift perturbation: the mimicked
// system is the OU system with common noise.
TEST(Mimicking, RandomDriftBatteryMatches) {
  MimickingConfig cfg;
  cfg.n_scenarios = 32;
  cfg.n_particles = 1000;
  cfg.n_steps = 100;
  cfg.seed = 21;
  cfg.enrichment_bumps = 4;
  const auto start = std::chrono::steady_clock::now();
  std::shared_ptr<const ProjectedCoefficients> fitted;
  const auto rep = run_mimicking_experiment(random_drift(), cfg, &fitted);
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(), 300.0);
  ASSERT_EQ(rep.times.size(), 3u);
  for (const auto& t : rep.times) {
    EXPECT_GE(t.battery.size(), 3u);
    for (const auto& g : t.battery) EXPECT_LE(std::abs(g.z()), 3.0) << g.name << " t=" << t.t;
  }
  ASSERT_TRUE(fitted);
  // Mimicked drift is close to -x at the centre of the training data.
  const auto& gf = fitted->group_features(fitted->n_slices() - 1);
  std::vector<double> feat(gf.begin(), gf.begin() + static_cast<std::ptrdiff_t>(fitted->n_features()));
  const double m = feat[0];
  EXPECT_NEAR(fitted->evaluate(1.0, feat, m).b, -m, 0.15);
  EXPECT_FALSE(rep.enrichment_drift_change.empty());
  EXPECT_NE(rep.to_json().find("random_drift"), std::string::npos);
}

TEST(Mimicking, MarkovianInputIsReproducedOnMatchedScenarios) {
  const auto ou = AffineMeanField::isotropic(1, 1.0, 0.5, 1.0, 0.7);
  const MimickingSystem sys{"ou", ou, InitialLaw::gaussian({0.0}, {0.5}), nullptr};
  MimickingConfig cfg;
  cfg.n_scenarios = 32;
  cfg.n_particles = 2000;
  cfg.n_steps = 100;
  cfg.enrichment_bumps = 0;
  // The drift reads the mean only; a one-dimensional feature kernel keeps
  // the feature smoothing bias small.
  cfg.features = FeatureMap::moments(1);
  const auto rep = run_mimicking_experiment(sys, cfg);
  for (const auto& t : rep.times) {
    EXPECT_LT(t.pooled_w1_matched, 0.01) << "t=" << t.t;
  }
}

TEST(Mimicking, FunctionalGapStatistics) {
  FunctionalGap g{"x", 1.0, 0.3, 1.5, 0.4};
  EXPECT_DOUBLE_EQ(g.combined_se(), 0.5);
  EXPECT_DOUBLE_EQ(g.z(), 1.0);
}

TEST(Export, ProjectionCsvHeader) {
  RandomStream rng(12);
  ProjectionSlice s;
  s.t = 0.0;
  s.n_features = 2;
  for (std::size_t i = 0; i < 500; ++i) {
    const double f[2] = {0.1 * (i % 5), 1.0};
    s.append(i % 5, rng.normal(), f, 0.0, 1.0);
  }
  const auto proj = markovian_projection({s});
  const auto path = std::filesystem::temp_directory_path() / "mkv_projection.csv";
  write_projection_csv(proj, path.string());
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "t,x,feat_1,feat_2,bhat_1,ahat_11");
  std::filesystem::remove(path);
}

// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "mkv/checked_io.h"
#include "mkv/mimic.h"
#include "mkv/parallel.h"
#include "mkv/wasserstein.h"

namespace mkv {

void merge_harvest(std::vector<std::vector<ProjectionSlice>>& per_scenario, std::vector<ProjectionSlice>& slices) {
  for (std::size_t m = 0; m < per_scenario.size(); ++m) {
    for (auto& s : per_scenario[m]) {
      auto it = std::find_if(slices.begin(), slices.end(),
                             [&](const ProjectionSlice& x) { return x.time_index == s.time_index; });
      if (it == slices.end()) {
        slices.push_back(std::move(s));
        continue;
      }
      if (it->n_features != s.n_features) throw std::invalid_argument("harvest feature count mismatch");
      it->scenario.insert(it->scenario.end(), s.scenario.begin(), s.scenario.end());
      it->x.insert(it->x.end(), s.x.begin(), s.x.end());
      it->features.insert(it->features.end(), s.features.begin(), s.features.end());
      it->b.insert(it->b.end(), s.b.begin(), s.b.end());
      it->ss.insert(it->ss.end(), s.ss.begin(), s.ss.end());
      it->extra.insert(it->extra.end(), s.extra.begin(), s.extra.end());
    }
  }
  std::sort(slices.begin(), slices.end(),
            [](const ProjectionSlice& a, const ProjectionSlice& b) { return a.time_index < b.time_index; });
}

std::vector<ParticleEnsemble> simulate_and_harvest(const CoefficientField& field, const InitialLaw& init,
                                                   const std::vector<ScenarioPtr>& scenarios,
                                                   std::size_t n_particles, const SimulationOptions& options,
                                                   const HarvestSpec& harvest,
                                                   std::vector<ProjectionSlice>& slices) {
  if (field.dim() != 1) throw std::invalid_argument("harvesting is implemented for d = 1");
  if (harvest.stride == 0) throw std::invalid_argument("harvest stride must be positive");
  const std::size_t M = scenarios.size();
  const std::size_t F = harvest.features.size();
  std::vector<std::optional<ParticleEnsemble>> ens(M);
  std::vector<std::vector<ProjectionSlice>> local(M);
  SimulationOptions inner = options;
  inner.workers = 1;
  parallel_for(M, options.workers, [&](std::size_t m) {
    auto& out = local[m];
    const auto n_steps = scenarios[m]->grid().n_steps();
    auto observer = [&](const StepFrame& fr) {
      if (fr.step % harvest.stride != 0 && fr.step != n_steps) return;
      ProjectionSlice s;
      s.t = fr.t;
      s.time_index = fr.step;
      s.n_features = F;
      const auto feats = harvest.features(fr.measure);
      EvalContext c;
      c.t = fr.t;
      c.step = fr.step;
      c.measure = &fr.measure;
      c.scenario = &fr.scenario;
      c.cache = fr.cache;
      for (std::size_t i = 0; i < fr.n; ++i) {
        c.particle = i;
        if (!fr.own_w.empty()) c.own_w = fr.own_w.subspan(i, 1);
        if (fr.aux_dim) c.aux = fr.aux.subspan(i * fr.aux_dim, fr.aux_dim);
        double b, sg;
        field.drift(c, fr.states.subspan(i, 1), std::span<double>(&b, 1));
        field.sigma(c, fr.states.subspan(i, 1), std::span<double>(&sg, 1));
        s.append(fr.scenario.index(), fr.states[i], feats, b, sg * sg);
      }
      out.push_back(std::move(s));
    };
    ens[m].emplace(simulate_mckv(field, init, scenarios[m], n_particles, inner, observer));
  });
  merge_harvest(local, slices);
  std::vector<ParticleEnsemble> result;
  result.reserve(M);
  for (auto& e : ens) result.push_back(std::move(*e));
  return result;
}

double FunctionalGap::combined_se() const { return std::sqrt(original_se * original_se + mimicked_se * mimicked_se); }

double FunctionalGap::z() const {
  const double se = combined_se();
  const double gap = mimicked - original;
  return se > 0.0 ? gap / se : (gap == 0.0 ? 0.0 : INFINITY);
}

double MimickingTimeReport::max_abs_z() const {
  double m = 0.0;
  for (const auto& g : battery) m = std::max(m, std::abs(g.z()));
  return m;
}

namespace {

void scenario_stats(const std::vector<double>& v, double& mean, double& se) {
  const double n = static_cast<double>(v.size());
  mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  se = v.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
}

EmpiricalMeasure pooled(const std::vector<ParticleEnsemble>& ens, std::size_t time_index) {
  std::vector<double> pts;
  for (const auto& e : ens) {
    const auto x = e.states(e.slot_of(time_index));
    pts.insert(pts.end(), x.begin(), x.end());
  }
  return EmpiricalMeasure(std::move(pts), 1);
}

std::vector<ProjectionSlice> first_features(const std::vector<ProjectionSlice>& slices, std::size_t count) {
  std::vector<ProjectionSlice> out;
  out.reserve(slices.size());
  for (const auto& s : slices) {
    ProjectionSlice t;
    t.t = s.t;
    t.time_index = s.time_index;
    t.n_features = count;
    t.scenario = s.scenario;
    t.x = s.x;
    t.b = s.b;
    t.ss = s.ss;
    t.n_extra = s.n_extra;
    t.extra = s.extra;
    t.features.reserve(s.size() * count);
    for (std::size_t r = 0; r < s.size(); ++r)
      for (std::size_t k = 0; k < count; ++k) t.features.push_back(s.features[r * s.n_features + k]);
    out.push_back(std::move(t));
  }
  return out;
}

std::size_t gcd_stride(const std::vector<std::size_t>& idx, std::size_t n_steps) {
  std::size_t g = n_steps;
  for (auto k : idx) g = std::gcd(g, k);
  return std::max<std::size_t>(g, 1);
}

}  // namespace

std::vector<FunctionalGap> functional_battery(const std::vector<ParticleEnsemble>& original,
                                              const std::vector<ParticleEnsemble>& mimicked,
                                              std::size_t time_index) {
  struct G {
    const char* name;
    double (*f)(double);
  };
  static const G gs[] = {{"x", [](double x) { return x; }},
                         {"x^2", [](double x) { return x * x; }},
                         {"cos(x)", [](double x) { return std::cos(x); }}};
  auto values = [&](const std::vector<ParticleEnsemble>& ens, const G& g, bool with_mean) {
    std::vector<double> v;
    for (const auto& e : ens) {
      const auto x = e.states(e.slot_of(time_index));
      double mean = 0.0, acc = 0.0;
      for (double xi : x) {
        mean += xi;
        acc += g.f(xi);
      }
      const double n = static_cast<double>(x.size());
      mean /= n;
      acc /= n;
      v.push_back(with_mean ? acc * mean : acc);
    }
    return v;
  };
  std::vector<FunctionalGap> out;
  for (const auto& g : gs)
    for (bool with_mean : {false, true}) {
      FunctionalGap gap;
      gap.name = with_mean ? fmt::format("E[{}*mean]", g.name) : fmt::format("E[{}]", g.name);
      scenario_stats(values(original, g, with_mean), gap.original, gap.original_se);
      scenario_stats(values(mimicked, g, with_mean), gap.mimicked, gap.mimicked_se);
      out.push_back(gap);
    }
  return out;
}

ComparisonReport run_mimicking_experiment(const MimickingSystem& system, const MimickingConfig& cfg,
                                          std::shared_ptr<const ProjectedCoefficients>* fitted) {
  if (!system.original) throw std::invalid_argument("mimicking experiment needs an original field");
  if (system.original->dim() != 1) throw std::invalid_argument("mimicking experiment is implemented for d = 1");
  if (cfg.n_scenarios < 2) throw std::invalid_argument("mimicking experiment needs at least two scenarios");
  const TimeGrid grid(cfg.horizon, cfg.n_steps);
  std::vector<std::size_t> report_idx;
  for (double t : cfg.report_times) report_idx.push_back(grid.nearest_index(t));

  SimulationOptions sim;
  sim.record_stride = gcd_stride(report_idx, cfg.n_steps);
  sim.workers = cfg.workers;

  // Harvest with the enriched map; the default fit uses its leading columns.
  FeatureMap harvest_map = cfg.features;
  const bool enrich = cfg.enrichment_bumps > 0 && cfg.features.describe().rfind("moments(", 0) == 0 &&
                      cfg.features.describe().find('+') == std::string::npos;
  if (enrich) {
    std::vector<TestFunction> bumps;
    const double span = cfg.enrichment_hi - cfg.enrichment_lo;
    const double step = span / static_cast<double>(cfg.enrichment_bumps + 1);
    for (std::size_t k = 1; k <= cfg.enrichment_bumps; ++k)
      bumps.push_back(TestFunction::gaussian_bump({cfg.enrichment_lo + step * static_cast<double>(k)}, 2.0 * step, step));
    harvest_map = FeatureMap::moments_and_basis(static_cast<unsigned>(cfg.features.size()), TestBasis(bumps));
  }

  const auto scen = make_scenarios(grid, 1, cfg.seed, 0, cfg.n_scenarios);
  const auto fresh = make_scenarios(grid, 1, cfg.seed, cfg.n_scenarios, cfg.n_scenarios);
  std::vector<ProjectionSlice> slices;
  const auto original = simulate_and_harvest(*system.original, system.init, scen, cfg.n_particles, sim,
                                             HarvestSpec{cfg.harvest_stride, harvest_map}, slices);
  const auto base_slices = enrich ? first_features(slices, cfg.features.size()) : slices;
  auto proj = std::make_shared<const ProjectedCoefficients>(base_slices, cfg.projection);
  if (fitted) *fitted = proj;

  const FieldPtr gamma_src = system.gamma_hat ? system.gamma_hat : system.original;
  const MimickedField mimic(proj, cfg.features, gamma_src);
  const auto mim_fresh = simulate_scenarios(mimic, system.init, fresh, cfg.n_particles, sim);
  const auto mim_matched = simulate_scenarios(mimic, system.init, scen, cfg.n_particles, sim);

  ComparisonReport rep;
  rep.system = system.name;
  rep.mode = cfg.projection.mode == ProjectionMode::conditional ? "conditional" : "classical";
  for (std::size_t j = 0; j < report_idx.size(); ++j) {
    const std::size_t k = report_idx[j];
    MimickingTimeReport tr;
    tr.t = grid.time(k);
    tr.time_index = k;
    const auto po = pooled(original, k), pf = pooled(mim_fresh, k), pm = pooled(mim_matched, k);
    const std::size_t nq = 4096;
    tr.pooled_w1_fresh = wasserstein1_1d(po.view(), pf.view(), nq);
    tr.pooled_w1_matched = wasserstein1_1d(po.view(), pm.view(), nq);
    double cw = 0.0;
    for (std::size_t m = 0; m < original.size(); ++m) {
      const auto a = original[m].measure(original[m].slot_of(k));
      const auto b = mim_matched[m].measure(mim_matched[m].slot_of(k));
      cw += wasserstein1_1d(a, b, 2048);
    }
    tr.conditional_w1_matched = cw / static_cast<double>(original.size());
    tr.battery = functional_battery(original, mim_fresh, k);
    rep.times.push_back(std::move(tr));
  }
  rep.extrapolations = mimic.extrapolations();
  rep.unusable_slices = proj->unusable_slices();

  if (enrich) {
    const ProjectedCoefficients rich(slices, cfg.projection);
    const std::size_t F = cfg.features.size(), FR = harvest_map.size();
    for (std::size_t i = 0; i < slices.size(); ++i) {
      const auto& s = slices[i];
      if (!proj->slice_usable(i)) continue;
      double acc = 0.0;
      std::size_t r = 0;
      while (r < s.size()) {
        std::size_t e = r;
        while (e < s.size() && s.scenario[e] == s.scenario[r]) ++e;
        const std::span<const double> fr(s.features.data() + r * FR, FR);
        const auto tb = proj->table(s.t, fr.first(F));
        const auto tr = rich.table(s.t, fr);
        for (std::size_t q = r; q < e; ++q) acc += std::abs(tr(s.x[q]).b - tb(s.x[q]).b);
        r = e;
      }
      rep.enrichment_times.push_back(s.t);
      rep.enrichment_drift_change.push_back(acc / static_cast<double>(s.size()));
    }
  }
  return rep;
}

std::string ComparisonReport::to_json() const {
  nlohmann::json j;
  j["system"] = system;
  j["mode"] = mode;
  j["extrapolations"] = extrapolations;
  j["unusable_slices"] = unusable_slices;
  nlohmann::json ts = nlohmann::json::array();
  for (const auto& t : times) {
    nlohmann::json b = nlohmann::json::array();
    for (const auto& g : t.battery)
      b.push_back({{"functional", g.name},
                   {"original", g.original},
                   {"original_se", g.original_se},
                   {"mimicked", g.mimicked},
                   {"mimicked_se", g.mimicked_se},
                   {"z", g.z()}});
    ts.push_back({{"t", t.t},
                  {"time_index", t.time_index},
                  {"pooled_w1_fresh", t.pooled_w1_fresh},
                  {"pooled_w1_matched", t.pooled_w1_matched},
                  {"conditional_w1_matched", t.conditional_w1_matched},
                  {"max_abs_z", t.max_abs_z()},
                  {"battery", b}});
  }
  j["times"] = ts;
  nlohmann::json en = nlohmann::json::array();
  for (std::size_t i = 0; i < enrichment_times.size(); ++i)
    en.push_back({{"t", enrichment_times[i]}, {"mean_abs_drift_change", enrichment_drift_change[i]}});
  j["feature_enrichment_sensitivity"] = en;
  return j.dump(2);
}

void write_projection_csv(const ProjectedCoefficients& proj, const std::string& path, std::size_t x_thin) {
  if (x_thin == 0) x_thin = 1;
  const std::size_t F = proj.n_features();
  std::ostringstream os;
  os << "t,x";
  for (std::size_t k = 0; k < F; ++k) os << ",feat_" << (k + 1);
  os << ",bhat_1,ahat_11\n";
  for (std::size_t i = 0; i < proj.n_slices(); ++i) {
    if (!proj.slice_usable(i)) continue;
    const auto& gf = proj.group_features(i);
    const auto xs = proj.slice_grid(i);
    for (std::size_t g = 0; g * F < gf.size(); ++g) {
      const std::span<const double> f(gf.data() + g * F, F);
      const auto tab = proj.table(proj.slice_time(i), f);
      for (std::size_t q = 0; q < xs.size(); q += x_thin) {
        const auto v = tab(xs[q]);
        os << exact(proj.slice_time(i)) << ',' << exact(xs[q]);
        for (double fk : f) os << ',' << exact(fk);
        os << ',' << exact(v.b) << ',' << exact(v.ss) << '\n';
      }
      if (proj.mode() == ProjectionMode::classical) break;
    }
  }
  write_checked(path, os.str());
}

}  // namespace mkv

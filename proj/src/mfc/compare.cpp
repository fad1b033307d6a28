// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "mkv/mfc.h"

namespace mkv {

namespace {

struct ControlTable final : StepCache {
  double x0 = 0.0, dx = 1.0;
  std::size_t n = 0, k = 1;
  std::vector<double> a;  // n * k
};

}  // namespace

MarkovianControl::MarkovianControl(const ControlProblem& problem, std::shared_ptr<const ProjectedCoefficients> proj,
                                   FeatureMap features, ControlSolveOptions solve, std::size_t table_points)
    : problem_(problem),
      proj_(std::move(proj)),
      features_(std::move(features)),
      solve_(solve),
      table_points_(std::max<std::size_t>(table_points, 2)),
      queries_(std::make_shared<std::atomic<std::size_t>>(0)),
      incidents_(std::make_shared<std::atomic<std::size_t>>(0)),
      excess_(std::make_shared<std::atomic<std::size_t>>(0)) {
  if (!proj_) throw std::invalid_argument("Markovian control needs a projection");
  if (proj_->n_extra() != 1 + problem_.space.dim())
    throw std::invalid_argument("projection channels do not match the control space");
  if (proj_->mode() == ProjectionMode::conditional && proj_->n_features() != features_.size())
    throw std::invalid_argument("feature map does not match the projection");
}

void MarkovianControl::evaluate(double t, double x, const MeasureView& m, std::span<double> a) const {
  const auto f = proj_->mode() == ProjectionMode::conditional ? features_(m) : std::vector<double>{};
  const auto tab = proj_->table(t, f);
  const auto v = tab(x);
  std::vector<double> ex(proj_->n_extra());
  tab.extra(x, ex);
  solve_control(problem_, t, x, m, v.b, v.ss, ex[0], std::span<const double>(ex).subspan(1), solve_, a);
}

std::unique_ptr<StepCache> MarkovianControl::prepare(const EvalContext& c) const {
  if (!c.measure) throw std::invalid_argument("Markovian control needs the current measure");
  const auto f = proj_->mode() == ProjectionMode::conditional ? features_(*c.measure) : std::vector<double>{};
  const auto tab = proj_->table(c.t, f);
  auto out = std::make_unique<ControlTable>();
  const std::size_t K = problem_.space.dim();
  out->n = table_points_;
  out->k = K;
  out->x0 = tab.lo();
  const double span = tab.hi() - tab.lo();
  out->dx = span > 0.0 ? span / static_cast<double>(table_points_ - 1) : 1.0;
  out->a.resize(out->n * K);
  std::vector<double> ex(proj_->n_extra());
  std::size_t incidents = 0, excess = 0;
  for (std::size_t q = 0; q < out->n; ++q) {
    const double x = out->x0 + out->dx * static_cast<double>(q);
    const auto v = tab(x);
    tab.extra(x, ex);
    const auto res = solve_control(problem_, c.t, x, *c.measure, v.b, v.ss, ex[0],
                                   std::span<const double>(ex).subspan(1), solve_,
                                   std::span<double>(out->a.data() + q * K, K));
    if (!res.feasible) ++incidents;
    if (res.cost_excess) ++excess;
  }
  queries_->fetch_add(out->n);
  incidents_->fetch_add(incidents);
  excess_->fetch_add(excess);
  return out;
}

void MarkovianControl::act(const EvalContext& c, double x, std::span<double> a) const {
  const auto* t = dynamic_cast<const ControlTable*>(c.cache);
  if (!t) throw std::logic_error("Markovian control evaluated without its step table");
  const double u = std::clamp((x - t->x0) / t->dx, 0.0, static_cast<double>(t->n - 1));
  if (problem_.space.kind() == ControlSpace::Kind::finite) {
    const auto q = static_cast<std::size_t>(std::lround(u));
    a[0] = t->a[q];
    return;
  }
  const auto i = std::min(static_cast<std::size_t>(u), t->n - 2);
  const double w = u - static_cast<double>(i);
  for (std::size_t k = 0; k < t->k; ++k) a[k] = (1.0 - w) * t->a[i * t->k + k] + w * t->a[(i + 1) * t->k + k];
}

std::shared_ptr<MarkovianControl> project_control(const WeakControlRun& run, const ControlProblem& problem,
                                                  const FeatureMap& features, const ProjectionOptions& options,
                                                  const ControlSolveOptions& solve) {
  if (run.slices.empty()) throw std::invalid_argument("control projection needs a harvested run");
  auto proj = std::make_shared<const ProjectedCoefficients>(run.slices, options);
  return std::make_shared<MarkovianControl>(problem, std::move(proj), features, solve);
}

double MfcReport::combined_se() const { return std::sqrt(se_open * se_open + se_markov * se_markov); }

double MfcReport::max_abs_z() const {
  double m = 0.0;
  for (const auto& g : gaps) m = std::max(m, std::abs(g.gap.z()));
  return m;
}

MfcReport markovianize_and_compare(const ControlProblem& problem, PolicyPtr open_loop, const MfcConfig& cfg) {
  const TimeGrid grid(problem.horizon, cfg.n_steps);
  std::vector<std::size_t> idx;
  for (double t : cfg.report_times) idx.push_back(grid.nearest_index(t));
  std::size_t stride = cfg.n_steps;
  for (auto k : idx) stride = std::gcd(stride, k);

  MfcReport rep;
  rep.problem = problem.name;
  rep.policy = open_loop->name();
  rep.roxin = check_roxin_default(problem, cfg.roxin_samples);

  const auto scen = make_scenarios(grid, 1, cfg.seed, 0, cfg.n_scenarios);
  const auto fresh = make_scenarios(grid, 1, cfg.seed, cfg.n_scenarios, cfg.n_scenarios);
  RunOptions ro;
  ro.simulation.record_stride = std::max<std::size_t>(stride, 1);
  ro.simulation.workers = cfg.workers;
  ro.harvest_stride = cfg.harvest_stride;
  ro.features = cfg.features;
  const auto open = simulate_control(problem, open_loop, scen, cfg.n_particles, ro);
  const auto control = project_control(open, problem, cfg.features, cfg.projection, cfg.solve);
  RunOptions mo = ro;
  mo.harvest_stride = 0;
  const auto markov = simulate_control(problem, control, fresh, cfg.n_particles, mo);
  const auto paired = simulate_control(problem, control, scen, cfg.n_particles, mo);

  const auto jo = evaluate_cost(open, problem);
  const auto jm = evaluate_cost(markov, problem);
  const auto jp = evaluate_cost(paired, problem);
  rep.J_open = jo.J;
  rep.se_open = jo.se;
  rep.J_markov = jm.J;
  rep.se_markov = jm.se;
  std::vector<double> diff(jo.scenario_costs.size());
  for (std::size_t m = 0; m < diff.size(); ++m) diff[m] = jo.scenario_costs[m] - jp.scenario_costs[m];
  const double M = static_cast<double>(diff.size());
  rep.paired_gap = std::accumulate(diff.begin(), diff.end(), 0.0) / M;
  double ss = 0.0;
  for (double d : diff) ss += (d - rep.paired_gap) * (d - rep.paired_gap);
  rep.paired_gap_se = M > 1 ? std::sqrt(ss / (M - 1.0) / M) : 0.0;
  rep.queries = control->queries();
  rep.incidents = control->incidents();
  rep.cost_excess = control->cost_excess();
  for (std::size_t k : idx)
    for (const auto& g : functional_battery(open.ensembles, markov.ensembles, k)) rep.gaps.push_back({grid.time(k), g});
  return rep;
}

std::string MfcReport::to_json() const {
  nlohmann::json j;
  j["problem"] = problem;
  j["policy"] = policy;
  j["J_open"] = J_open;
  j["J_markov"] = J_markov;
  j["se_open"] = se_open;
  j["se_markov"] = se_markov;
  j["paired_gap"] = paired_gap;
  j["paired_gap_se"] = paired_gap_se;
  j["roxin"] = {{"points", roxin.points},
                {"pairs", roxin.pairs},
                {"violations", roxin.violations},
                {"worst_mismatch", roxin.worst_mismatch}};
  j["projection"] = {{"queries", queries}, {"incidents", incidents}, {"cost_excess", cost_excess}};
  nlohmann::json g = nlohmann::json::array();
  for (const auto& x : gaps)
    g.push_back({{"t", x.t},
                 {"functional", x.gap.name},
                 {"open", x.gap.original},
                 {"open_se", x.gap.original_se},
                 {"markov", x.gap.mimicked},
                 {"markov_se", x.gap.mimicked_se},
                 {"z", x.gap.z()}});
  j["gaps"] = g;
  return j.dump(2);
}

}  // namespace mkv

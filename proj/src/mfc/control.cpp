// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>

#include <fmt/format.h>

#include "mkv/mfc.h"
#include "mkv/parallel.h"

namespace mkv {

ControlSpace ControlSpace::interval(double lo, double hi) {
  if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi)) throw std::invalid_argument("control interval needs lo < hi");
  ControlSpace s;
  s.kind_ = Kind::interval;
  s.lo_ = lo;
  s.hi_ = hi;
  return s;
}

ControlSpace ControlSpace::finite(std::vector<double> actions) {
  if (actions.empty()) throw std::invalid_argument("finite control set is empty");
  ControlSpace s;
  s.kind_ = Kind::finite;
  s.lo_ = *std::min_element(actions.begin(), actions.end());
  s.hi_ = *std::max_element(actions.begin(), actions.end());
  s.actions_ = std::move(actions);
  return s;
}

ControlSpace ControlSpace::simplex(std::vector<double> actions) {
  ControlSpace s = finite(std::move(actions));
  s.kind_ = Kind::simplex;
  return s;
}

bool ControlSpace::contains(std::span<const double> a, double tol) const {
  if (a.size() != dim()) return false;
  switch (kind_) {
    case Kind::interval:
      return a[0] >= lo_ - tol && a[0] <= hi_ + tol;
    case Kind::finite:
      return std::any_of(actions_.begin(), actions_.end(), [&](double v) { return std::abs(v - a[0]) <= tol; });
    case Kind::simplex: {
      double s = 0.0;
      for (double w : a) {
        if (w < -tol) return false;
        s += w;
      }
      return std::abs(s - 1.0) <= tol;
    }
  }
  return false;
}

void ControlSpace::sample(RandomStream& rng, std::span<double> a) const {
  switch (kind_) {
    case Kind::interval:
      a[0] = rng.uniform(lo_, hi_);
      return;
    case Kind::finite:
      a[0] = actions_[rng.below(actions_.size())];
      return;
    case Kind::simplex: {
      double s = 0.0;
      for (auto& w : a) {
        w = -std::log(1.0 - rng.uniform());
        s += w;
      }
      for (auto& w : a) w /= s;
      return;
    }
  }
}

double ControlSpace::barycenter(std::span<const double> a) const {
  if (kind_ != Kind::simplex) return a[0];
  double s = 0.0;
  for (std::size_t l = 0; l < actions_.size(); ++l) s += a[l] * actions_[l];
  return s;
}

std::string ControlSpace::describe() const {
  switch (kind_) {
    case Kind::interval:
      return fmt::format("interval[{},{}]", lo_, hi_);
    case Kind::finite:
      return fmt::format("finite({})", fmt::join(actions_, ","));
    case Kind::simplex:
      return fmt::format("simplex({})", fmt::join(actions_, ","));
  }
  return "";
}

double ControlProblem::drift_at(double t, double x, const MeasureView& m, std::span<const double> a) const {
  if (space.kind() != ControlSpace::Kind::simplex) return b(t, x, m, a[0]);
  double s = 0.0;
  for (std::size_t l = 0; l < a.size(); ++l) s += a[l] * b(t, x, m, space.actions()[l]);
  return s;
}

double ControlProblem::sigma_sq_at(double t, double x, const MeasureView& m, std::span<const double> a) const {
  if (space.kind() != ControlSpace::Kind::simplex) {
    const double s = sigma(t, x, m, a[0]);
    return s * s;
  }
  double s = 0.0;
  for (std::size_t l = 0; l < a.size(); ++l) {
    const double v = sigma(t, x, m, space.actions()[l]);
    s += a[l] * v * v;
  }
  return s;
}

double ControlProblem::cost_at(double t, double x, const MeasureView& m, std::span<const double> a) const {
  if (!f) return 0.0;
  if (space.kind() != ControlSpace::Kind::simplex) return f(t, x, m, a[0]);
  double s = 0.0;
  for (std::size_t l = 0; l < a.size(); ++l) s += a[l] * f(t, x, m, space.actions()[l]);
  return s;
}

ControlProblem relaxed(const ControlProblem& p) {
  if (p.space.kind() != ControlSpace::Kind::finite) throw std::invalid_argument("relaxation needs a finite action set");
  ControlProblem r = p;
  r.name = p.name + "_relaxed";
  r.space = ControlSpace::simplex(p.space.actions());
  return r;
}

namespace {

class SchedulePolicy final : public ControlPolicy {
 public:
  SchedulePolicy(std::function<double(double)> fn, std::string label) : fn_(std::move(fn)), label_(std::move(label)) {}
  std::string name() const override { return label_; }
  void act(const EvalContext& c, double, std::span<double> a) const override { a[0] = fn_(c.t); }

 private:
  std::function<double(double)> fn_;
  std::string label_;
};

class FeedbackPolicy final : public ControlPolicy {
 public:
  FeedbackPolicy(std::function<double(double, double, const MeasureView&)> fn, double sd, ControlSpace space,
                 std::string label)
      : fn_(std::move(fn)), sd_(sd), space_(std::move(space)), label_(std::move(label)) {
    if (space_.kind() != ControlSpace::Kind::interval) throw std::invalid_argument("feedback policy needs an interval");
  }
  std::string name() const override { return label_; }
  std::size_t aux_dim() const override { return sd_ > 0.0 ? 1 : 0; }
  void act(const EvalContext& c, double x, std::span<double> a) const override {
    double v = fn_(c.t, x, *c.measure);
    if (sd_ > 0.0) v += sd_ * c.aux[0];
    a[0] = std::clamp(v, space_.lo(), space_.hi());
  }

 private:
  std::function<double(double, double, const MeasureView&)> fn_;
  double sd_;
  ControlSpace space_;
  std::string label_;
};

class RelaxedRandomPolicy final : public ControlPolicy {
 public:
  RelaxedRandomPolicy(std::function<std::vector<double>(double, double)> q, std::string label)
      : q_(std::move(q)), label_(std::move(label)) {}
  std::string name() const override { return label_; }
  std::size_t aux_dim() const override { return 1; }
  void act(const EvalContext& c, double x, std::span<double> a) const override {
    const auto q = q_(c.t, x);
    if (q.size() != a.size()) throw std::invalid_argument("relaxed policy probabilities have the wrong length");
    const double u = 0.5 * std::erfc(-c.aux[0] / std::sqrt(2.0));
    double cum = 0.0;
    std::size_t pick = q.size() - 1;
    for (std::size_t l = 0; l < q.size(); ++l) {
      cum += q[l];
      if (u < cum) {
        pick = l;
        break;
      }
    }
    std::fill(a.begin(), a.end(), 0.0);
    a[pick] = 1.0;
  }

 private:
  std::function<std::vector<double>(double, double)> q_;
  std::string label_;
};

}  // namespace

PolicyPtr schedule_policy(std::function<double(double)> schedule, std::string label) {
  return std::make_shared<SchedulePolicy>(std::move(schedule), std::move(label));
}

PolicyPtr feedback_policy(std::function<double(double, double, const MeasureView&)> feedback, double noise_sd,
                          const ControlSpace& space, std::string label) {
  return std::make_shared<FeedbackPolicy>(std::move(feedback), noise_sd, space, std::move(label));
}

PolicyPtr relaxed_random_policy(std::function<std::vector<double>(double, double)> probabilities, std::string label) {
  return std::make_shared<RelaxedRandomPolicy>(std::move(probabilities), std::move(label));
}

ControlledField::ControlledField(const ControlProblem& problem, PolicyPtr policy)
    : problem_(problem), policy_(std::move(policy)) {
  if (!policy_) throw std::invalid_argument("controlled field needs a policy");
  if (!problem_.b || !problem_.sigma || !problem_.gamma) throw std::invalid_argument("control problem coefficients missing");
}

void ControlledField::action(const EvalContext& c, double x, std::span<double> a) const { policy_->act(c, x, a); }

void ControlledField::drift(const EvalContext& c, std::span<const double> x, std::span<double> out) const {
  double buf[16];
  const std::size_t k = problem_.space.dim();
  std::vector<double> heap;
  std::span<double> a = k <= 16 ? std::span<double>(buf, k) : std::span<double>((heap.resize(k), heap.data()), k);
  policy_->act(c, x[0], a);
  out[0] = problem_.drift_at(c.t, x[0], *c.measure, a);
}

void ControlledField::sigma(const EvalContext& c, std::span<const double> x, std::span<double> out) const {
  double buf[16];
  const std::size_t k = problem_.space.dim();
  std::vector<double> heap;
  std::span<double> a = k <= 16 ? std::span<double>(buf, k) : std::span<double>((heap.resize(k), heap.data()), k);
  policy_->act(c, x[0], a);
  if (problem_.space.kind() == ControlSpace::Kind::simplex)
    out[0] = std::sqrt(problem_.sigma_sq_at(c.t, x[0], *c.measure, a));
  else
    out[0] = problem_.sigma(c.t, x[0], *c.measure, a[0]);
}

void ControlledField::gamma(const EvalContext& c, std::span<const double> x, std::span<double> out) const {
  out[0] = problem_.gamma(c.t, x[0], *c.measure);
}

WeakControlRun simulate_control(const ControlProblem& problem, PolicyPtr policy,
                                const std::vector<ScenarioPtr>& scenarios, std::size_t n_particles,
                                const RunOptions& options) {
  if (problem.init.dim() != 1) throw std::invalid_argument("control problems are implemented for d = 1");
  const ControlledField field(problem, policy);
  const std::size_t M = scenarios.size(), K = problem.space.dim();
  const std::size_t F = options.features.size();
  WeakControlRun run;
  run.policy = policy->name();
  run.control_dim = K;
  run.running_cost.assign(M, std::vector<double>(n_particles, 0.0));
  run.running_abs_cost.assign(M, std::vector<double>(n_particles, 0.0));
  std::vector<std::optional<ParticleEnsemble>> ens(M);
  std::vector<std::vector<ProjectionSlice>> local(M);
  SimulationOptions inner = options.simulation;
  inner.workers = 1;
  parallel_for(M, options.simulation.workers, [&](std::size_t m) {
    auto& cost = run.running_cost[m];
    auto& abs_cost = run.running_abs_cost[m];
    const auto n_steps = scenarios[m]->grid().n_steps();
    const double dt = scenarios[m]->grid().dt();
    auto observer = [&](const StepFrame& fr) {
      const double w = (fr.step == 0 || fr.step == n_steps) ? 0.5 * dt : dt;
      const bool harvest = options.harvest_stride > 0 && (fr.step % options.harvest_stride == 0 || fr.step == n_steps);
      ProjectionSlice s;
      std::vector<double> feats;
      if (harvest) {
        s.t = fr.t;
        s.time_index = fr.step;
        s.n_features = F;
        s.n_extra = 1 + K;
        feats = options.features(fr.measure);
      }
      EvalContext c;
      c.t = fr.t;
      c.step = fr.step;
      c.measure = &fr.measure;
      c.scenario = &fr.scenario;
      c.cache = fr.cache;
      std::vector<double> a(K), ex(1 + K);
      for (std::size_t i = 0; i < fr.n; ++i) {
        c.particle = i;
        if (fr.aux_dim) c.aux = fr.aux.subspan(i * fr.aux_dim, fr.aux_dim);
        const double x = fr.states[i];
        field.action(c, x, a);
        const double fi = problem.cost_at(fr.t, x, fr.measure, a);
        if (!std::isfinite(fi))
          throw SimulationError(fr.step, "running cost",
                                fmt::format("non-finite running cost at step {} (particle {})", fr.step, i));
        cost[i] += w * fi;
        abs_cost[i] += w * std::abs(fi);
        if (harvest) {
          ex[0] = fi;
          std::copy(a.begin(), a.end(), ex.begin() + 1);
          s.append(fr.scenario.index(), x, feats, problem.drift_at(fr.t, x, fr.measure, a),
                   problem.sigma_sq_at(fr.t, x, fr.measure, a), ex);
        }
      }
      if (harvest) local[m].push_back(std::move(s));
    };
    ens[m].emplace(simulate_mckv(field, problem.init, scenarios[m], n_particles, inner, observer));
  });
  merge_harvest(local, run.slices);
  for (auto& e : ens) run.ensembles.push_back(std::move(*e));
  return run;
}

CostReport evaluate_cost(const WeakControlRun& run, const ControlProblem& problem) {
  CostReport rep;
  if (run.ensembles.empty()) throw std::invalid_argument("cost of an empty run");
  double abs_acc = 0.0;
  for (std::size_t m = 0; m < run.ensembles.size(); ++m) {
    const auto& e = run.ensembles[m];
    const std::size_t last = e.n_slots() - 1;
    const auto mu = e.measure(last);
    double acc = 0.0, aacc = 0.0;
    for (std::size_t i = 0; i < e.n_particles(); ++i) {
      const double g = problem.terminal_at(e.state(last, i)[0], mu);
      if (!std::isfinite(g))
        throw SimulationError(e.scenario().grid().n_steps(), "terminal cost",
                              fmt::format("non-finite terminal cost (scenario {}, particle {})", m, i));
      acc += run.running_cost[m][i] + g;
      aacc += run.running_abs_cost[m][i] + std::abs(g);
    }
    const double n = static_cast<double>(e.n_particles());
    rep.scenario_costs.push_back(acc / n);
    abs_acc += aacc / n;
  }
  const double M = static_cast<double>(rep.scenario_costs.size());
  rep.J = std::accumulate(rep.scenario_costs.begin(), rep.scenario_costs.end(), 0.0) / M;
  double ss = 0.0;
  for (double c : rep.scenario_costs) ss += (c - rep.J) * (c - rep.J);
  rep.se = M > 1 ? std::sqrt(ss / (M - 1.0) / M) : 0.0;
  rep.expected_abs = abs_acc / M;
  rep.integrable = std::isfinite(rep.expected_abs);
  return rep;
}

namespace {

double mismatch_of(double b, double ss, double tb, double tss) {
  return std::max(std::abs(b - tb) / (1.0 + std::abs(tb)), std::abs(ss - tss) / (1.0 + std::abs(tss)));
}

template <class Fn>
double golden_min(Fn&& fn, double lo, double hi, std::size_t iters) {
  const double r = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = lo, b = hi;
  double c = b - r * (b - a), d = a + r * (b - a);
  double fc = fn(c), fd = fn(d);
  for (std::size_t k = 0; k < iters; ++k) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - r * (b - a);
      fc = fn(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + r * (b - a);
      fd = fn(d);
    }
  }
  return fc <= fd ? c : d;
}

}  // namespace

ControlSolve solve_control(const ControlProblem& p, double t, double x, const MeasureView& m, double tb, double tss,
                           double tf, std::span<const double> weights, const ControlSolveOptions& o,
                           std::span<double> a) {
  ControlSolve out;
  const double cost_tol = o.match_tol * (1.0 + std::abs(tf));
  auto finish = [&](double mis) {
    out.mismatch = mis;
    out.feasible = mis <= o.match_tol;
    out.cost_excess = p.cost_at(t, x, m, a) > tf + cost_tol;
    return out;
  };
  const auto& sp = p.space;
  if (sp.kind() == ControlSpace::Kind::simplex) {
    if (weights.size() != sp.dim()) throw std::invalid_argument("simplex solve needs control weights");
    double s = 0.0;
    for (std::size_t l = 0; l < a.size(); ++l) s += (a[l] = std::max(0.0, weights[l]));
    if (!(s > 0.0)) throw std::invalid_argument("simplex weights vanish");
    for (auto& w : a) w /= s;
    return finish(mismatch_of(p.drift_at(t, x, m, a), p.sigma_sq_at(t, x, m, a), tb, tss));
  }
  auto mis1 = [&](double v) {
    const double s = p.sigma(t, x, m, v);
    return mismatch_of(p.b(t, x, m, v), s * s, tb, tss);
  };
  auto cost1 = [&](double v) { return p.f ? p.f(t, x, m, v) : 0.0; };
  if (sp.kind() == ControlSpace::Kind::finite) {
    double best_f = INFINITY, best_mis = INFINITY, closest_mis = INFINITY;
    std::optional<double> best, closest;
    for (double v : sp.actions()) {
      const double mis = mis1(v), fv = cost1(v);
      if (mis < closest_mis) {
        closest_mis = mis;
        closest = v;
      }
      if (mis <= o.match_tol && fv < best_f) {
        best_f = fv;
        best_mis = mis;
        best = v;
      }
    }
    a[0] = best ? *best : *closest;
    return finish(best ? best_mis : closest_mis);
  }
  // Interval: grid, then golden refinement of every local minimum of the mismatch.
  const std::size_t G = std::max<std::size_t>(o.grid, 3);
  const double lo = sp.lo(), hi = sp.hi(), step = (hi - lo) / static_cast<double>(G - 1);
  std::vector<double> av(G), mv(G), fv(G);
  for (std::size_t j = 0; j < G; ++j) {
    av[j] = j + 1 == G ? hi : lo + step * static_cast<double>(j);
    mv[j] = mis1(av[j]);
    fv[j] = cost1(av[j]);
  }
  struct Cand {
    double a, mis, f;
  };
  std::vector<Cand> cands;
  bool any_grid_feasible = false;
  for (std::size_t j = 0; j < G; ++j) {
    if (mv[j] <= o.match_tol) {
      cands.push_back({av[j], mv[j], fv[j]});
      any_grid_feasible = true;
    }
    const bool local_min = (j == 0 || mv[j] <= mv[j - 1]) && (j + 1 == G || mv[j] <= mv[j + 1]);
    if (local_min && mv[j] > o.match_tol) {
      const double l = std::max(lo, av[j] - step), h = std::min(hi, av[j] + step);
      const double r = golden_min(mis1, l, h, o.golden_iters);
      cands.push_back({r, mis1(r), cost1(r)});
    }
  }
  const Cand* best = nullptr;
  for (const auto& c : cands)
    if (c.mis <= o.match_tol && (!best || c.f < best->f || (c.f == best->f && c.a < best->a))) best = &c;
  if (best) {
    double res = best->a;
    double mres = best->mis;
    if (any_grid_feasible) {
      // Refine the cost between the neighbouring grid points, keeping feasibility.
      const double l = std::max(lo, res - step), h = std::min(hi, res + step);
      const double r = golden_min([&](double v) { return mis1(v) <= o.match_tol ? cost1(v) : INFINITY; }, l, h,
                                  o.golden_iters);
      const double mr = mis1(r);
      if (mr <= o.match_tol && cost1(r) < cost1(res)) {
        res = r;
        mres = mr;
      }
    }
    a[0] = res;
    return finish(mres);
  }
  const Cand* closest = nullptr;
  for (const auto& c : cands)
    if (!closest || c.mis < closest->mis) closest = &c;
  if (!closest) {
    const auto j = static_cast<std::size_t>(std::min_element(mv.begin(), mv.end()) - mv.begin());
    a[0] = av[j];
    return finish(mv[j]);
  }
  a[0] = closest->a;
  return finish(closest->mis);
}

RoxinReport check_roxin(const ControlProblem& p, const std::vector<RoxinPoint>& points, std::size_t n_a_samples,
                        std::uint64_t seed, double tol) {
  RoxinReport rep;
  ControlSolveOptions o;
  o.match_tol = tol;
  const std::size_t K = p.space.dim();
  std::vector<double> a1(K), a2(K), mid(K), wit(K);
  for (std::size_t q = 0; q < points.size(); ++q) {
    const auto& pt = points[q];
    if (!pt.m) throw std::invalid_argument("Roxin point needs a measure");
    RandomStream rng = RandomStream::for_particle(seed, q, 0, Lane::auxiliary);
    ++rep.points;
    for (std::size_t s = 0; s < n_a_samples; ++s) {
      p.space.sample(rng, a1);
      p.space.sample(rng, a2);
      for (std::size_t k = 0; k < K; ++k) mid[k] = 0.5 * (a1[k] + a2[k]);
      const double tb = 0.5 * (p.drift_at(pt.t, pt.x, *pt.m, a1) + p.drift_at(pt.t, pt.x, *pt.m, a2));
      const double tss = 0.5 * (p.sigma_sq_at(pt.t, pt.x, *pt.m, a1) + p.sigma_sq_at(pt.t, pt.x, *pt.m, a2));
      const double tz = 0.5 * (p.cost_at(pt.t, pt.x, *pt.m, a1) + p.cost_at(pt.t, pt.x, *pt.m, a2));
      const auto res = solve_control(p, pt.t, pt.x, *pt.m, tb, tss, tz, mid, o, wit);
      ++rep.pairs;
      rep.worst_mismatch = std::max(rep.worst_mismatch, res.mismatch);
      if (!res.feasible || res.cost_excess) ++rep.violations;
    }
  }
  return rep;
}

RoxinReport check_roxin_default(const ControlProblem& p, std::size_t n_a_samples) {
  std::vector<double> pts(400);
  RandomStream rng(0xc0ffeeULL);
  for (auto& v : pts) v = rng.normal();
  const EmpiricalMeasure m(pts, 1);
  const auto view = m.view();
  std::vector<RoxinPoint> points;
  for (double t : {0.0, 0.5 * p.horizon, p.horizon})
    for (double x : {-2.0, -1.0, 0.0, 1.0, 2.0}) points.push_back({t, x, &view});
  return check_roxin(p, points, n_a_samples);
}

ControlProblem lq_problem(double v0, double bound) {
  ControlProblem p;
  p.name = "lq";
  p.space = ControlSpace::interval(-bound, bound);
  p.b = [](double, double, const MeasureView&, double a) { return a; };
  p.sigma = [](double, double, const MeasureView&, double) { return 1.0; };
  p.gamma = [](double, double, const MeasureView&) { return 1.0; };
  p.f = [](double, double x, const MeasureView&, double a) { return a * a + x * x; };
  p.g = [](double, const MeasureView&) { return 0.0; };
  p.init = v0 > 0.0 ? InitialLaw::gaussian({0.0}, {std::sqrt(v0)}) : InitialLaw::point_mass({0.0});
  p.horizon = 1.0;
  return p;
}

}  // namespace mkv

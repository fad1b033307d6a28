// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mkv/coefficients.h"
#include "mkv/initial_law.h"
#include "mkv/mimic.h"
#include "mkv/particles.h"
#include "mkv/rng.h"

namespace mkv {

// Action set A. `simplex` is the relaxation of a finite set: a control is a
// weight vector over the listed actions and coefficients are affine in it.
class ControlSpace {
 public:
  enum class Kind { interval, finite, simplex };
  static ControlSpace interval(double lo, double hi);
  static ControlSpace finite(std::vector<double> actions);
  static ControlSpace simplex(std::vector<double> actions);

  Kind kind() const { return kind_; }
  // Length of a control vector: 1, or the number of actions for a simplex.
  std::size_t dim() const { return kind_ == Kind::simplex ? actions_.size() : 1; }
  double lo() const { return lo_; }
  double hi() const { return hi_; }
  const std::vector<double>& actions() const { return actions_; }
  bool contains(std::span<const double> a, double tol = 1e-12) const;
  // Deterministic draw of a point of A from a uniform(0,1) stream.
  void sample(RandomStream& rng, std::span<double> a) const;
  // Sum_l w_l a_l for a simplex control; the control itself otherwise.
  double barycenter(std::span<const double> a) const;
  std::string describe() const;

 private:
  Kind kind_ = Kind::interval;
  double lo_ = 0.0, hi_ = 0.0;
  std::vector<double> actions_;
};

// dX = b(t,x,m,a) dt + sigma(t,x,m,a) dW + gamma(t,x,m) dB, d = 1,
// J = E[int_0^T f(t,X,mu,a) dt + g(X_T, mu_T)].
struct ControlProblem {
  using Coef = std::function<double(double t, double x, const MeasureView& m, double a)>;
  std::string name;
  ControlSpace space = ControlSpace::interval(-1.0, 1.0);
  Coef b, sigma, f;
  std::function<double(double t, double x, const MeasureView& m)> gamma;
  std::function<double(double x, const MeasureView& m)> g;
  InitialLaw init = InitialLaw::point_mass({0.0});
  double horizon = 1.0;

  // Coefficients at a control vector; simplex controls average the
  // per-action values (sigma through sigma^2).
  double drift_at(double t, double x, const MeasureView& m, std::span<const double> a) const;
  double sigma_sq_at(double t, double x, const MeasureView& m, std::span<const double> a) const;
  double cost_at(double t, double x, const MeasureView& m, std::span<const double> a) const;
  double gamma_at(double t, double x, const MeasureView& m) const { return gamma(t, x, m); }
  double terminal_at(double x, const MeasureView& m) const { return g ? g(x, m) : 0.0; }
};

// Relaxed lift of a problem over a finite action set.
ControlProblem relaxed(const ControlProblem& finite_problem);

// Control generator; act() must be a deterministic function of the context
// so that drift and sigma see the same action.
class ControlPolicy {
 public:
  virtual ~ControlPolicy() = default;
  virtual std::string name() const = 0;
  virtual std::size_t aux_dim() const { return 0; }
  virtual std::unique_ptr<StepCache> prepare(const EvalContext&) const { return nullptr; }
  virtual void act(const EvalContext& c, double x, std::span<double> a) const = 0;
};
using PolicyPtr = std::shared_ptr<const ControlPolicy>;

// a = schedule(t).
PolicyPtr schedule_policy(std::function<double(double)> schedule, std::string label = "schedule");
// a = clamp(feedback(t, x, m) + noise_sd xi), xi ~ N(0,1) fresh per step.
PolicyPtr feedback_policy(std::function<double(double, double, const MeasureView&)> feedback, double noise_sd,
                          const ControlSpace& space, std::string label = "feedback");
// Simplex control: one-hot on action l with probability q_l(t, x).
PolicyPtr relaxed_random_policy(std::function<std::vector<double>(double, double)> probabilities,
                                std::string label = "relaxed_random");

// The controlled dynamics as a coefficient field.
class ControlledField final : public CoefficientField {
 public:
  ControlledField(const ControlProblem& problem, PolicyPtr policy);
  std::size_t dim() const override { return 1; }
  std::string name() const override { return "controlled:" + policy_->name(); }
  std::size_t aux_dim() const override { return policy_->aux_dim(); }
  std::unique_ptr<StepCache> prepare(const EvalContext& c) const override { return policy_->prepare(c); }
  void drift(const EvalContext& c, std::span<const double> x, std::span<double> out) const override;
  void sigma(const EvalContext& c, std::span<const double> x, std::span<double> out) const override;
  void gamma(const EvalContext& c, std::span<const double> x, std::span<double> out) const override;
  void action(const EvalContext& c, double x, std::span<double> a) const;

 private:
  ControlProblem problem_;
  PolicyPtr policy_;
};

// Ensembles of a controlled run, per-particle running-cost integrals
// (trapezoid in time) and harvested rows for projection. Harvest channels:
// b(a), sigma^2(a) and the extras f(a), a_1..a_k.
struct WeakControlRun {
  std::string policy;
  std::vector<ParticleEnsemble> ensembles;
  std::vector<std::vector<double>> running_cost;      // [scenario][particle]
  std::vector<std::vector<double>> running_abs_cost;  // for the integrability check
  std::vector<ProjectionSlice> slices;
  std::size_t control_dim = 1;
};

struct RunOptions {
  SimulationOptions simulation;
  std::size_t harvest_stride = 0;  // 0 = no harvest
  FeatureMap features = FeatureMap::moments(4);
};

WeakControlRun simulate_control(const ControlProblem& problem, PolicyPtr policy,
                                const std::vector<ScenarioPtr>& scenarios, std::size_t n_particles,
                                const RunOptions& options = {});

struct CostReport {
  double J = 0.0;
  double se = 0.0;  // over scenario-level means
  double expected_abs = 0.0;  // E[int |f| dt + |g|]
  bool integrable = true;
  std::vector<double> scenario_costs;
};
CostReport evaluate_cost(const WeakControlRun& run, const ControlProblem& problem);

struct RoxinPoint {
  double t = 0.0;
  double x = 0.0;
  const MeasureView* m = nullptr;
};
struct RoxinReport {
  std::size_t points = 0, pairs = 0, violations = 0;
  double worst_mismatch = 0.0;
  bool passed() const { return violations == 0; }
};
RoxinReport check_roxin(const ControlProblem& problem, const std::vector<RoxinPoint>& points,
                        std::size_t n_a_samples, std::uint64_t seed = 7, double tol = 1e-6);
// t in {0, T/2, T}, x in {-2, -1, 0, 1, 2} against a standard normal sample.
RoxinReport check_roxin_default(const ControlProblem& problem, std::size_t n_a_samples = 16);

struct ControlSolveOptions {
  std::size_t grid = 101;        // coarse search points over an interval A
  std::size_t golden_iters = 40;
  double match_tol = 1e-6;       // relative tolerance on the b and sigma^2 targets
};

// Solves for a in A with b(a) = target_b and sigma^2(a) = target_ss within
// tolerance, minimising f; ties go to the smallest a. Returns false if no
// feasible a was found (the closest a is still written).
struct ControlSolve {
  bool feasible = true;
  bool cost_excess = false;  // f(a*) above the target cost
  double mismatch = 0.0;
};
ControlSolve solve_control(const ControlProblem& problem, double t, double x, const MeasureView& m,
                           double target_b, double target_ss, double target_f, std::span<const double> weights,
                           const ControlSolveOptions& options, std::span<double> a);

// Markovian control a^(t, x, features) backed by regressions of b, sigma^2,
// f (and the control weights for a simplex) on the harvested rows.
class MarkovianControl final : public ControlPolicy {
 public:
  MarkovianControl(const ControlProblem& problem, std::shared_ptr<const ProjectedCoefficients> proj,
                   FeatureMap features, ControlSolveOptions solve, std::size_t table_points = 61);
  std::string name() const override { return "markovian"; }
  std::unique_ptr<StepCache> prepare(const EvalContext& c) const override;
  void act(const EvalContext& c, double x, std::span<double> a) const override;
  std::size_t queries() const { return queries_->load(); }
  std::size_t incidents() const { return incidents_->load(); }
  std::size_t cost_excess() const { return excess_->load(); }
  const ProjectedCoefficients& projection() const { return *proj_; }
  // a^ at one query point, solving directly.
  void evaluate(double t, double x, const MeasureView& m, std::span<double> a) const;

 private:
  ControlProblem problem_;
  std::shared_ptr<const ProjectedCoefficients> proj_;
  FeatureMap features_;
  ControlSolveOptions solve_;
  std::size_t table_points_;
  std::shared_ptr<std::atomic<std::size_t>> queries_, incidents_, excess_;
};

std::shared_ptr<MarkovianControl> project_control(const WeakControlRun& run, const ControlProblem& problem,
                                                  const FeatureMap& features, const ProjectionOptions& options = {},
                                                  const ControlSolveOptions& solve = {});

struct MfcConfig {
  std::size_t n_steps = 200;
  std::size_t n_scenarios = 64;
  std::size_t n_particles = 2000;
  std::uint64_t seed = 11;
  std::size_t harvest_stride = 10;
  std::vector<double> report_times{0.5, 1.0};
  FeatureMap features = FeatureMap::moments(2);
  ProjectionOptions projection;
  ControlSolveOptions solve;
  std::size_t roxin_samples = 16;
  std::size_t workers = 0;
};

struct MfcReport {
  std::string problem;
  std::string policy;
  double J_open = 0.0, se_open = 0.0, J_markov = 0.0, se_markov = 0.0;
  // Same scenarios and particle streams: the paired cost difference.
  double paired_gap = 0.0, paired_gap_se = 0.0;
  RoxinReport roxin;
  std::size_t queries = 0, incidents = 0, cost_excess = 0;
  struct Gap {
    double t;
    FunctionalGap gap;
  };
  std::vector<Gap> gaps;  // open vs Markovian on fresh scenarios
  double combined_se() const;
  double max_abs_z() const;
  std::string to_json() const;
};

MfcReport markovianize_and_compare(const ControlProblem& problem, PolicyPtr open_loop, const MfcConfig& config);

// dX = a dt + dW + dB, f = a^2 + x^2, g = 0, X_0 ~ N(0, v0), A = [-bound, bound].
ControlProblem lq_problem(double v0 = 0.25, double bound = 6.0);

}  // namespace mkv

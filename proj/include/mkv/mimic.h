// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mkv/coefficients.h"
#include "mkv/initial_law.h"
#include "mkv/measure.h"
#include "mkv/particles.h"
#include "mkv/test_function.h"

namespace mkv {

// Symmetric PSD square root by eigendecomposition; negative eigenvalues are
// clipped to zero and the clipped magnitude (largest |negative eigenvalue|)
// is reported. Rejects matrices asymmetric beyond 1e-10.
struct PsdSqrt {
  std::vector<double> root;  // d*d
  double clipped = 0.0;
};
PsdSqrt psd_sqrt(std::span<const double> a, std::size_t dim);

// Finite summary of a measure used as the conditioning variable.
class FeatureMap {
 public:
  // Mean and central moments of orders 2..k of coordinate 0.
  static FeatureMap moments(unsigned k = 4);
  // Moments followed by the pairings <m, phi_i>.
  static FeatureMap moments_and_basis(unsigned k, TestBasis basis);
  // A single feature that is always 0.
  static FeatureMap constant();

  std::size_t size() const;
  std::vector<double> operator()(const MeasureView& m) const;
  std::vector<std::string> names() const;
  std::string describe() const;

 private:
  unsigned moments_ = 0;
  std::vector<TestFunction> basis_;
  bool constant_ = false;
};

// Observations harvested at one time node, one row per particle.
struct ProjectionSlice {
  double t = 0.0;
  std::size_t time_index = 0;
  std::size_t n_features = 0;
  std::vector<std::uint64_t> scenario;  // per row
  std::vector<double> x;                // per row
  std::vector<double> features;         // per row, n_features each
  std::vector<double> b;                // observed drift
  std::vector<double> ss;               // observed sigma sigma^T
  std::size_t n_extra = 0;              // further regressed channels
  std::vector<double> extra;            // per row, n_extra each
  std::size_t size() const { return x.size(); }
  void append(std::uint64_t scen, double xi, std::span<const double> f, double bi, double ssi,
              std::span<const double> ex = {});
};

// One observation viewed row-wise.
struct ProjectionSample {
  double t;
  double x;
  std::span<const double> features;
  double b;
  double ss;
  std::uint64_t scenario_index;
};
ProjectionSample sample_at(const ProjectionSlice& slice, std::size_t row);

enum class ProjectionMode { conditional, classical };

struct ProjectionOptions {
  ProjectionMode mode = ProjectionMode::conditional;
  double x_bandwidth = 0.0;                // 0 = Silverman's rule per slice
  std::vector<double> feature_bandwidths;  // empty = Silverman's rule across scenarios
  std::size_t min_slice_samples = 100;
};

// Nadaraya-Watson estimates of E[b | mu features, X = x] and
// E[sigma sigma^T | mu features, X = x] with a Gaussian product kernel,
// fitted per time slice (d = 1). Rows are grouped by scenario: rows within a
// group share their feature vector, so each group is binned onto a fine x
// grid once and smoothed there, and a query combines the groups with their
// feature-kernel weights. Times between slices interpolate linearly.
class ProjectedCoefficients {
 public:
  struct Value {
    double b = 0.0;
    double ss = 0.0;
    bool extrapolated = false;
  };
  // Per-(t, features) surface reused across all particles of one step.
  class StepTable {
   public:
    Value operator()(double x) const;
    // Extra channels at x, written to out (n_extra values).
    void extra(double x, std::span<double> out) const;
    bool features_extrapolated() const { return feat_extrap_; }
    bool slice_fallback() const { return slice_fallback_; }
    // Training hull in x over the slices in use.
    double lo() const;
    double hi() const;

   private:
    friend class ProjectedCoefficients;
    struct Part {
      double weight = 0.0;
      double x0 = 0.0, dx = 1.0, lo = 0.0, hi = 0.0;
      std::vector<double> b, ss;
      std::vector<double> extra;  // n_extra * G
    };
    std::size_t n_extra_ = 0;
    std::vector<Part> parts_;
    bool feat_extrap_ = false;
    bool slice_fallback_ = false;
  };

  ProjectedCoefficients(const std::vector<ProjectionSlice>& slices, const ProjectionOptions& options);

  ProjectionMode mode() const { return options_.mode; }
  std::size_t n_features() const { return n_features_; }
  std::size_t n_extra() const { return n_extra_; }
  std::size_t n_slices() const { return slices_.size(); }
  double slice_time(std::size_t i) const { return slices_[i].t; }
  bool slice_usable(std::size_t i) const { return slices_[i].usable; }
  double x_bandwidth(std::size_t i) const { return slices_[i].hx; }
  const std::vector<double>& feature_bandwidths(std::size_t i) const { return slices_[i].hf; }
  std::size_t unusable_slices() const;

  StepTable table(double t, std::span<const double> features) const;
  Value evaluate(double t, std::span<const double> features, double x) const { return table(t, features)(x); }

  // Training feature vectors of slice i, one per scenario group.
  const std::vector<double>& group_features(std::size_t i) const { return slices_[i].group_features; }
  // x grid of slice i.
  std::vector<double> slice_grid(std::size_t i) const;

 private:
  struct Slice {
    double t = 0.0;
    bool usable = false;
    double hx = 0.0;
    std::vector<double> hf;
    double x0 = 0.0, dx = 1.0, lo = 0.0, hi = 0.0;
    std::size_t G = 0;
    std::vector<double> group_features;   // groups * F
    std::vector<double> fmin, fmax;
    std::vector<double> den, num_b, num_ss;  // groups * G, kernel-smoothed
    std::vector<double> num_extra;           // n_extra * groups * G
  };
  void combine(const Slice& s, std::span<const double> features, double weight, StepTable& out) const;

  ProjectionOptions options_;
  std::size_t n_features_ = 0;
  std::size_t n_extra_ = 0;
  std::vector<Slice> slices_;
};

ProjectedCoefficients markovian_projection(const std::vector<ProjectionSlice>& slices,
                                           const ProjectionOptions& options = {});

// dX = b^(t, F(mu), x) dt + sqrt(ss^(t, F(mu), x)) dW + gamma(t, mu, x) dB,
// with gamma taken from a field that is already Markovian.
class MimickedField final : public CoefficientField {
 public:
  MimickedField(std::shared_ptr<const ProjectedCoefficients> proj, FeatureMap features, FieldPtr gamma_source);
  std::size_t dim() const override { return 1; }
  std::string name() const override { return "mimicked"; }
  std::unique_ptr<StepCache> prepare(const EvalContext& c) const override;
  void drift(const EvalContext& c, std::span<const double> x, std::span<double> out) const override;
  void sigma(const EvalContext& c, std::span<const double> x, std::span<double> out) const override;
  void gamma(const EvalContext& c, std::span<const double> x, std::span<double> out) const override;
  std::size_t extrapolations() const { return extrap_->load(); }

 private:
  const ProjectedCoefficients::StepTable& table(const EvalContext& c) const;
  std::shared_ptr<const ProjectedCoefficients> proj_;
  FeatureMap features_;
  FieldPtr gamma_;
  std::shared_ptr<std::atomic<std::size_t>> extrap_;
};

// Appends per-scenario harvests to `slices` in scenario order, keeping slices
// sorted by time index.
void merge_harvest(std::vector<std::vector<ProjectionSlice>>& per_scenario, std::vector<ProjectionSlice>& slices);

// Harvest options for the original run.
struct HarvestSpec {
  std::size_t stride = 10;  // harvest every k-th step
  FeatureMap features = FeatureMap::moments(4);
};
// Runs the original system over the scenarios and returns its recorded
// ensembles; rows of observed coefficients are appended to `slices`.
std::vector<ParticleEnsemble> simulate_and_harvest(const CoefficientField& field, const InitialLaw& init,
                                                   const std::vector<ScenarioPtr>& scenarios,
                                                   std::size_t n_particles, const SimulationOptions& options,
                                                   const HarvestSpec& harvest,
                                                   std::vector<ProjectionSlice>& slices);

struct MimickingConfig {
  double horizon = 1.0;
  std::size_t n_steps = 200;
  std::size_t n_scenarios = 64;
  std::size_t n_particles = 2000;
  std::uint64_t seed = 1;
  std::size_t harvest_stride = 10;
  std::vector<double> report_times{0.25, 0.5, 1.0};
  ProjectionOptions projection;
  FeatureMap features = FeatureMap::moments(4);
  // Refit with the moments plus this many bump features and report the
  // drift change on the training rows; 0 disables.
  std::size_t enrichment_bumps = 8;
  double enrichment_lo = -3.0, enrichment_hi = 3.0;
  std::size_t workers = 0;
};

struct FunctionalGap {
  std::string name;
  double original = 0.0, original_se = 0.0;
  double mimicked = 0.0, mimicked_se = 0.0;
  double combined_se() const;
  double z() const;
};

struct MimickingTimeReport {
  double t = 0.0;
  std::size_t time_index = 0;
  double pooled_w1_fresh = 0.0;
  double pooled_w1_matched = 0.0;
  double conditional_w1_matched = 0.0;  // mean over matched scenarios
  std::vector<FunctionalGap> battery;   // original vs fresh mimicked scenarios
  double max_abs_z() const;
};

struct ComparisonReport {
  std::string system;
  std::string mode;
  std::vector<MimickingTimeReport> times;
  std::size_t extrapolations = 0;
  std::size_t unusable_slices = 0;
  // Per harvest slice: mean |b^ enriched - b^| over the training rows.
  std::vector<double> enrichment_times, enrichment_drift_change;
  std::string to_json() const;
};

struct MimickingSystem {
  std::string name;
  FieldPtr original;
  InitialLaw init;
  FieldPtr gamma_hat;  // Markovian common-noise coefficient; null = original's gamma
};

ComparisonReport run_mimicking_experiment(const MimickingSystem& system, const MimickingConfig& config,
                                          std::shared_ptr<const ProjectedCoefficients>* fitted = nullptr);

// Battery of joint functionals E[g(X_t) h(mu_t)], g in {x, x^2, cos x},
// h in {1, mean}; scenario-level means and their standard errors.
std::vector<FunctionalGap> functional_battery(const std::vector<ParticleEnsemble>& original,
                                              const std::vector<ParticleEnsemble>& mimicked,
                                              std::size_t time_index);

// t,x,feat_1..feat_F,bhat_1,ahat_11 on every slice grid and training feature vector.
void write_projection_csv(const ProjectedCoefficients& proj, const std::string& path, std::size_t x_thin = 4);

}  // namespace mkv

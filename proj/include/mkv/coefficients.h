// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mkv/measure.h"
#include "mkv/scenario.h"
#include "mkv/test_function.h"

namespace mkv {

// Per-step data a field precomputes once from the current measure.
struct StepCache {
  virtual ~StepCache() = default;
};

struct EvalContext {
  double t = 0.0;
  std::size_t step = 0;
  const MeasureView* measure = nullptr;
  const Scenario* scenario = nullptr;  // B history, readable up to `step`
  std::size_t particle = 0;
  std::span<const double> own_w;  // particle's W at t, if the field asks for it
  std::span<const double> aux;    // fresh N(0,1) draws for this particle and step
  const StepCache* cache = nullptr;
};

// Coefficients (b, sigma, gamma) of
//   dX = b dt + sigma dW + gamma dB,
// each evaluated at (t, mu, x) plus whatever the context exposes. sigma and
// gamma are d x d, row-major.
class CoefficientField {
 public:
  virtual ~CoefficientField() = default;

  virtual std::size_t dim() const = 0;
  virtual std::string name() const = 0;
  virtual void drift(const EvalContext& c, std::span<const double> x, std::span<double> out) const = 0;
  virtual void sigma(const EvalContext& c, std::span<const double> x, std::span<double> out) const = 0;
  virtual void gamma(const EvalContext& c, std::span<const double> x, std::span<double> out) const = 0;

  virtual std::size_t aux_dim() const { return 0; }
  virtual bool needs_own_path() const { return false; }
  virtual std::unique_ptr<StepCache> prepare(const EvalContext&) const { return nullptr; }

  // a = sigma sigma^T + gamma gamma^T.
  void diffusion(const EvalContext& c, std::span<const double> x, std::span<double> out) const;
};

using FieldPtr = std::shared_ptr<const CoefficientField>;

// b = b0 + A x + C mean(mu), sigma and gamma constant.
struct AffineMeanField final : CoefficientField {
  std::size_t d = 1;
  std::vector<double> b0, state, mean_coupling, sigma_m, gamma_m;

  AffineMeanField(std::size_t dim, std::vector<double> drift0, std::vector<double> state_matrix,
                  std::vector<double> mean_matrix, std::vector<double> sigma_matrix,
                  std::vector<double> gamma_matrix);
  // Isotropic helper: b = -kappa x + coupling * mean, sigma = s I, gamma = g I.
  static std::shared_ptr<AffineMeanField> isotropic(std::size_t dim, double kappa, double coupling,
                                                    double s, double g);

  std::size_t dim() const override { return d; }
  std::string name() const override { return "affine_mean_field"; }
  void drift(const EvalContext& c, std::span<const double> x, std::span<double> out) const override;
  void sigma(const EvalContext& c, std::span<const double> x, std::span<double> out) const override;
  void gamma(const EvalContext& c, std::span<const double> x, std::span<double> out) const override;
};

// b = -strength * grad (mu * G_h)(x): repulsion from crowded regions.
struct LocalDensityField final : CoefficientField {
  std::size_t d = 1;
  double strength = 1.0, bandwidth = 0.2, s = 1.0, g = 0.0;

  LocalDensityField(std::size_t dim, double strength_, double bandwidth_, double sigma_, double gamma_);
  std::size_t dim() const override { return d; }
  std::string name() const override { return "local_density"; }
  void drift(const EvalContext& c, std::span<const double> x, std::span<double> out) const override;
  void sigma(const EvalContext& c, std::span<const double> x, std::span<double> out) const override;
  void gamma(const EvalContext& c, std::span<const double> x, std::span<double> out) const override;
};

// Coefficients driven by the common path:
//   b = c_path B_t + c_x x + c_sin sin(x),  sigma = (s0 + s_path tanh(B_t)) I,  gamma = g0 I.
struct ScenarioRandomField final : CoefficientField {
  std::size_t d = 1;
  double c_path = 0.0, c_x = 0.0, c_sin = 0.0, s0 = 1.0, s_path = 0.0, g0 = 0.0;

  explicit ScenarioRandomField(std::size_t dim) : d(dim) {}
  std::size_t dim() const override { return d; }
  std::string name() const override { return "scenario_random"; }
  void drift(const EvalContext& c, std::span<const double> x, std::span<double> out) const override;
  void sigma(const EvalContext& c, std::span<const double> x, std::span<double> out) const override;
  void gamma(const EvalContext& c, std::span<const double> x, std::span<double> out) const override;
};

// Field assembled from callables; the general-purpose family.
struct CompositeField final : CoefficientField {
  using Fn = std::function<void(const EvalContext&, std::span<const double>, std::span<double>)>;
  std::size_t d = 1;
  std::string label = "composite";
  Fn b, s, g;
  std::size_t n_aux = 0;
  bool own_path = false;

  CompositeField(std::size_t dim, Fn drift_fn, Fn sigma_fn, Fn gamma_fn);
  std::size_t dim() const override { return d; }
  std::string name() const override { return label; }
  std::size_t aux_dim() const override { return n_aux; }
  bool needs_own_path() const override { return own_path; }
  void drift(const EvalContext& c, std::span<const double> x, std::span<double> out) const override;
  void sigma(const EvalContext& c, std::span<const double> x, std::span<double> out) const override;
  void gamma(const EvalContext& c, std::span<const double> x, std::span<double> out) const override;
};

// Wraps another field and rescales its drift and common-noise coefficient.
struct ScaledField final : CoefficientField {
  FieldPtr base;
  double drift_scale = 1.0, gamma_scale = 1.0;

  ScaledField(FieldPtr inner, double b_scale, double g_scale);
  std::size_t dim() const override { return base->dim(); }
  std::string name() const override { return base->name() + "_scaled"; }
  std::size_t aux_dim() const override { return base->aux_dim(); }
  bool needs_own_path() const override { return base->needs_own_path(); }
  std::unique_ptr<StepCache> prepare(const EvalContext& c) const override { return base->prepare(c); }
  void drift(const EvalContext& c, std::span<const double> x, std::span<double> out) const override;
  void sigma(const EvalContext& c, std::span<const double> x, std::span<double> out) const override;
  void gamma(const EvalContext& c, std::span<const double> x, std::span<double> out) const override;
};

// Scalar helpers for the common d = 1 case.
FieldPtr scalar_field(std::function<double(const EvalContext&, double)> b,
                      std::function<double(const EvalContext&, double)> s,
                      std::function<double(const EvalContext&, double)> g,
                      std::string label = "composite");
FieldPtr constant_field(double b, double s, double g);

// Pairings of a one-dimensional test function against mu that enter its
// weak-form increment over a step:
//   generator  = <mu, b phi' + a phi''/2>
//   noise      = <mu, gamma phi'>
//   correction = <mu, gamma (gamma phi')'>, the coefficient of (dB^2 - dt)/2
// in the second-order quadrature of the dB integral.
struct WeakPairings {
  double value = 0.0;
  double generator = 0.0;
  double noise = 0.0;
  double correction = 0.0;
};
WeakPairings weak_pairings(const TestFunction& phi, const MeasureView& mu,
                           const CoefficientField& field, const EvalContext& base);

}  // namespace mkv

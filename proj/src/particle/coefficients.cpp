// SPDX-License-Identifier: Apache-2.0
#include "mkv/coefficients.h"

#include <cmath>
#include <stdexcept>

namespace mkv {
namespace {

void check_square(const std::vector<double>& m, std::size_t d, const char* what) {
  if (m.size() != d * d) throw std::invalid_argument(std::string(what) + " must be d x d");
}

void identity_times(double v, std::size_t d, std::span<double> out) {
  for (std::size_t i = 0; i < d * d; ++i) out[i] = 0.0;
  for (std::size_t i = 0; i < d; ++i) out[i * d + i] = v;
}

}  // namespace

void CoefficientField::diffusion(const EvalContext& c, std::span<const double> x,
                                 std::span<double> out) const {
  const std::size_t d = dim();
  std::vector<double> s(d * d), g(d * d);
  sigma(c, x, s);
  gamma(c, x, g);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < d; ++k) acc += s[i * d + k] * s[j * d + k] + g[i * d + k] * g[j * d + k];
      out[i * d + j] = acc;
    }
}

AffineMeanField::AffineMeanField(std::size_t dim, std::vector<double> drift0,
                                 std::vector<double> state_matrix, std::vector<double> mean_matrix,
                                 std::vector<double> sigma_matrix, std::vector<double> gamma_matrix)
    : d(dim), b0(std::move(drift0)), state(std::move(state_matrix)),
      mean_coupling(std::move(mean_matrix)), sigma_m(std::move(sigma_matrix)),
      gamma_m(std::move(gamma_matrix)) {
  if (d == 0) throw std::invalid_argument("dimension must be positive");
  if (b0.size() != d) throw std::invalid_argument("drift constant must have d entries");
  check_square(state, d, "state matrix");
  check_square(mean_coupling, d, "mean matrix");
  check_square(sigma_m, d, "sigma");
  check_square(gamma_m, d, "gamma");
}

std::shared_ptr<AffineMeanField> AffineMeanField::isotropic(std::size_t dim, double kappa,
                                                            double coupling, double s, double g) {
  std::vector<double> A(dim * dim, 0.0), C(dim * dim, 0.0), S(dim * dim, 0.0), G(dim * dim, 0.0);
  for (std::size_t i = 0; i < dim; ++i) {
    A[i * dim + i] = -kappa;
    C[i * dim + i] = coupling;
    S[i * dim + i] = s;
    G[i * dim + i] = g;
  }
  return std::make_shared<AffineMeanField>(dim, std::vector<double>(dim, 0.0), A, C, S, G);
}

void AffineMeanField::drift(const EvalContext& c, std::span<const double> x,
                            std::span<double> out) const {
  const std::vector<double>* m = c.measure ? &c.measure->mean() : nullptr;
  for (std::size_t i = 0; i < d; ++i) {
    double acc = b0[i];
    for (std::size_t j = 0; j < d; ++j) {
      acc += state[i * d + j] * x[j];
      if (m) acc += mean_coupling[i * d + j] * (*m)[j];
    }
    out[i] = acc;
  }
}

void AffineMeanField::sigma(const EvalContext&, std::span<const double>, std::span<double> out) const {
  for (std::size_t i = 0; i < d * d; ++i) out[i] = sigma_m[i];
}

void AffineMeanField::gamma(const EvalContext&, std::span<const double>, std::span<double> out) const {
  for (std::size_t i = 0; i < d * d; ++i) out[i] = gamma_m[i];
}

LocalDensityField::LocalDensityField(std::size_t dim, double strength_, double bandwidth_,
                                     double sigma_, double gamma_)
    : d(dim), strength(strength_), bandwidth(bandwidth_), s(sigma_), g(gamma_) {
  if (d == 0 || !(bandwidth > 0.0)) throw std::invalid_argument("local density field needs h > 0");
}

void LocalDensityField::drift(const EvalContext& c, std::span<const double> x,
                              std::span<double> out) const {
  if (!c.measure) throw std::invalid_argument("local density field needs the current measure");
  c.measure->kde_gradient(x, bandwidth, out);
  for (std::size_t i = 0; i < d; ++i) out[i] *= -strength;
}

void LocalDensityField::sigma(const EvalContext&, std::span<const double>, std::span<double> out) const {
  identity_times(s, d, out);
}

void LocalDensityField::gamma(const EvalContext&, std::span<const double>, std::span<double> out) const {
  identity_times(g, d, out);
}

void ScenarioRandomField::drift(const EvalContext& c, std::span<const double> x,
                                std::span<double> out) const {
  for (std::size_t i = 0; i < d; ++i) {
    const double b = c.scenario ? c.scenario->value(c.step)[i] : 0.0;
    out[i] = c_path * b + c_x * x[i] + c_sin * std::sin(x[i]);
  }
}

void ScenarioRandomField::sigma(const EvalContext& c, std::span<const double>,
                                std::span<double> out) const {
  const double b = c.scenario ? c.scenario->value(c.step)[0] : 0.0;
  identity_times(s0 + s_path * std::tanh(b), d, out);
}

void ScenarioRandomField::gamma(const EvalContext&, std::span<const double>, std::span<double> out) const {
  identity_times(g0, d, out);
}

CompositeField::CompositeField(std::size_t dim, Fn drift_fn, Fn sigma_fn, Fn gamma_fn)
    : d(dim), b(std::move(drift_fn)), s(std::move(sigma_fn)), g(std::move(gamma_fn)) {
  if (d == 0 || !b || !s || !g) throw std::invalid_argument("composite field needs b, sigma, gamma");
}

void CompositeField::drift(const EvalContext& c, std::span<const double> x, std::span<double> out) const {
  b(c, x, out);
}
void CompositeField::sigma(const EvalContext& c, std::span<const double> x, std::span<double> out) const {
  s(c, x, out);
}
void CompositeField::gamma(const EvalContext& c, std::span<const double> x, std::span<double> out) const {
  g(c, x, out);
}

ScaledField::ScaledField(FieldPtr inner, double b_scale, double g_scale)
    : base(std::move(inner)), drift_scale(b_scale), gamma_scale(g_scale) {
  if (!base) throw std::invalid_argument("scaled field needs a base field");
}

void ScaledField::drift(const EvalContext& c, std::span<const double> x, std::span<double> out) const {
  base->drift(c, x, out);
  for (double& v : out) v *= drift_scale;
}
void ScaledField::sigma(const EvalContext& c, std::span<const double> x, std::span<double> out) const {
  base->sigma(c, x, out);
}
void ScaledField::gamma(const EvalContext& c, std::span<const double> x, std::span<double> out) const {
  base->gamma(c, x, out);
  for (double& v : out) v *= gamma_scale;
}

FieldPtr scalar_field(std::function<double(const EvalContext&, double)> b,
                      std::function<double(const EvalContext&, double)> s,
                      std::function<double(const EvalContext&, double)> g, std::string label) {
  auto f = std::make_shared<CompositeField>(
      1, [b](const EvalContext& c, std::span<const double> x, std::span<double> o) { o[0] = b(c, x[0]); },
      [s](const EvalContext& c, std::span<const double> x, std::span<double> o) { o[0] = s(c, x[0]); },
      [g](const EvalContext& c, std::span<const double> x, std::span<double> o) { o[0] = g(c, x[0]); });
  f->label = std::move(label);
  return f;
}

FieldPtr constant_field(double b, double s, double g) {
  auto f = AffineMeanField::isotropic(1, 0.0, 0.0, s, g);
  f->b0[0] = b;
  return f;
}

WeakPairings weak_pairings(const TestFunction& phi, const MeasureView& mu,
                           const CoefficientField& field, const EvalContext& base) {
  if (field.dim() != 1 || mu.dim() != 1 || phi.dim() != 1)
    throw std::invalid_argument("weak pairings are implemented for d = 1");
  WeakPairings out;
  EvalContext c = base;
  c.measure = &mu;
  double b, s, g, gp, gm;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const double x = mu.point1(i);
    double v, d1, d2;
    phi.eval1(x, v, d1, d2);
    const double w = mu.weight(i);
    out.value += w * v;
    if (v == 0.0 && d1 == 0.0 && d2 == 0.0) continue;
    c.particle = i;
    const double xs[1] = {x};
    field.drift(c, xs, std::span<double>(&b, 1));
    field.sigma(c, xs, std::span<double>(&s, 1));
    field.gamma(c, xs, std::span<double>(&g, 1));
    const double h = 1e-5 * std::max(1.0, std::abs(x));
    const double xp[1] = {x + h}, xm[1] = {x - h};
    field.gamma(c, xp, std::span<double>(&gp, 1));
    field.gamma(c, xm, std::span<double>(&gm, 1));
    const double gprime = (gp - gm) / (2.0 * h);
    out.generator += w * (b * d1 + 0.5 * (s * s + g * g) * d2);
    out.noise += w * g * d1;
    out.correction += w * g * (gprime * d1 + g * d2);
  }
  return out;
}

}  // namespace mkv

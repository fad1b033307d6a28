// SPDX-License-Identifier: Apache-2.0
#include "mkv/cylindrical.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

#include "mkv/rng.h"

namespace mkv {

CylindricalFunctional::CylindricalFunctional(std::string id, TestBasis basis, Value f, Vector grad, Vector hess)
    : id_(std::move(id)), basis_(std::move(basis)), f_(std::move(f)), grad_(std::move(grad)), hess_(std::move(hess)) {
  if (!f_ || !grad_ || !hess_) throw std::invalid_argument("cylindrical functional needs f, grad f, Hess f");
}

CylindricalFunctional CylindricalFunctional::linear(std::string id, TestBasis basis, std::vector<double> c) {
  if (c.size() != basis.size()) throw std::invalid_argument("one coefficient per basis function");
  return CylindricalFunctional(
      std::move(id), std::move(basis),
      [c](std::span<const double> z) {
        double s = 0.0;
        for (std::size_t i = 0; i < c.size(); ++i) s += c[i] * z[i];
        return s;
      },
      [c](std::span<const double>, std::span<double> g) {
        for (std::size_t i = 0; i < c.size(); ++i) g[i] = c[i];
      },
      [](std::span<const double>, std::span<double> h) {
        for (double& v : h) v = 0.0;
      });
}

CylindricalFunctional CylindricalFunctional::quadratic(std::string id, TestBasis basis, std::vector<double> Q,
                                                       std::vector<double> c) {
  const std::size_t K = basis.size();
  if (Q.size() != K * K || c.size() != K) throw std::invalid_argument("quadratic functional shape mismatch");
  for (std::size_t i = 0; i < K; ++i)
    for (std::size_t j = 0; j < K; ++j)
      if (Q[i * K + j] != Q[j * K + i]) throw std::invalid_argument("quadratic form must be symmetric");
  return CylindricalFunctional(
      std::move(id), std::move(basis),
      [Q, c, K](std::span<const double> z) {
        double s = 0.0;
        for (std::size_t i = 0; i < K; ++i) {
          s += c[i] * z[i];
          for (std::size_t j = 0; j < K; ++j) s += 0.5 * Q[i * K + j] * z[i] * z[j];
        }
        return s;
      },
      [Q, c, K](std::span<const double> z, std::span<double> g) {
        for (std::size_t i = 0; i < K; ++i) {
          g[i] = c[i];
          for (std::size_t j = 0; j < K; ++j) g[i] += Q[i * K + j] * z[j];
        }
      },
      [Q](std::span<const double>, std::span<double> h) {
        for (std::size_t i = 0; i < Q.size(); ++i) h[i] = Q[i];
      });
}

CylindricalFunctional CylindricalFunctional::exponential(std::string id, TestBasis basis, std::vector<double> s) {
  const std::size_t K = basis.size();
  if (s.size() != K) throw std::invalid_argument("one rate per basis function");
  auto dot = [s](std::span<const double> z) {
    double a = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) a += s[i] * z[i];
    return a;
  };
  return CylindricalFunctional(
      std::move(id), std::move(basis), [dot](std::span<const double> z) { return std::exp(-dot(z)); },
      [dot, s](std::span<const double> z, std::span<double> g) {
        const double e = std::exp(-dot(z));
        for (std::size_t i = 0; i < s.size(); ++i) g[i] = -s[i] * e;
      },
      [dot, s, K](std::span<const double> z, std::span<double> h) {
        const double e = std::exp(-dot(z));
        for (std::size_t i = 0; i < K; ++i)
          for (std::size_t j = 0; j < K; ++j) h[i * K + j] = s[i] * s[j] * e;
      });
}

CylindricalFunctional CylindricalFunctional::sine(std::string id, TestBasis basis, std::vector<double> w) {
  const std::size_t K = basis.size();
  if (w.size() != K) throw std::invalid_argument("one frequency per basis function");
  auto dot = [w](std::span<const double> z) {
    double a = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) a += w[i] * z[i];
    return a;
  };
  return CylindricalFunctional(
      std::move(id), std::move(basis), [dot](std::span<const double> z) { return std::sin(dot(z)); },
      [dot, w](std::span<const double> z, std::span<double> g) {
        const double c = std::cos(dot(z));
        for (std::size_t i = 0; i < w.size(); ++i) g[i] = w[i] * c;
      },
      [dot, w, K](std::span<const double> z, std::span<double> h) {
        const double s = std::sin(dot(z));
        for (std::size_t i = 0; i < K; ++i)
          for (std::size_t j = 0; j < K; ++j) h[i * K + j] = -w[i] * w[j] * s;
      });
}

CylindricalFunctional CylindricalFunctional::constant(std::string id, TestBasis basis, double value) {
  return CylindricalFunctional(
      std::move(id), std::move(basis), [value](std::span<const double>) { return value; },
      [](std::span<const double>, std::span<double> g) {
        for (double& v : g) v = 0.0;
      },
      [](std::span<const double>, std::span<double> h) {
        for (double& v : h) v = 0.0;
      });
}

std::vector<double> CylindricalFunctional::features(const MeasureView& m) const {
  std::vector<double> z(size());
  for (std::size_t i = 0; i < size(); ++i) z[i] = m.pair(basis_[i]);
  return z;
}

std::vector<double> CylindricalFunctional::gradient_at(std::span<const double> z) const {
  std::vector<double> g(size());
  grad_(z, g);
  return g;
}

std::vector<double> CylindricalFunctional::hessian_at(std::span<const double> z) const {
  std::vector<double> h(size() * size());
  hess_(z, h);
  return h;
}

LionsDerivatives lions_derivatives(const CylindricalFunctional& F, const MeasureView& m,
                                   std::span<const double> v, std::span<const double> v_prime) {
  const std::size_t d = m.dim(), K = F.size();
  if (v.size() != d || v_prime.size() != d || F.basis().dim() != d)
    throw std::invalid_argument("lions_derivatives dimension mismatch");
  const auto z = F.features(m);
  const auto g = F.gradient_at(z);
  const auto H = F.hessian_at(z);
  LionsDerivatives out;
  out.first.assign(d, 0.0);
  out.vertical.assign(d * d, 0.0);
  out.second.assign(d * d, 0.0);
  std::vector<std::vector<double>> gv(K, std::vector<double>(d)), gw(K, std::vector<double>(d));
  std::vector<double> hv(d * d);
  for (std::size_t i = 0; i < K; ++i) {
    out.flat += g[i] * F.basis()[i].eval(v, gv[i], hv);
    F.basis()[i].eval(v_prime, gw[i], {});
    for (std::size_t a = 0; a < d; ++a) {
      out.first[a] += g[i] * gv[i][a];
      for (std::size_t b = 0; b < d; ++b) out.vertical[a * d + b] += g[i] * hv[a * d + b];
    }
  }
  for (std::size_t i = 0; i < K; ++i)
    for (std::size_t j = 0; j < K; ++j) {
      const double h = H[i * K + j];
      if (h == 0.0) continue;
      for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = 0; b < d; ++b) out.second[a * d + b] += h * gv[i][a] * gw[j][b];
    }
  return out;
}

namespace {

struct AtomData {
  std::vector<double> u;  // per atom, per basis function: gamma^T grad phi_i (d)
  std::vector<double> drift_part;  // per atom, per basis function: b . grad phi_i + a : Hess phi_i / 2
};

AtomData atom_data(const CylindricalFunctional& F, const MeasureView& m, const CoefficientField& field,
                   const GeneratorContext& ctx) {
  const std::size_t d = m.dim(), K = F.size(), N = m.size();
  if (field.dim() != d || F.basis().dim() != d) throw std::invalid_argument("generator dimension mismatch");
  AtomData out;
  out.u.assign(N * K * d, 0.0);
  out.drift_part.assign(N * K, 0.0);
  EvalContext c;
  c.t = ctx.t;
  c.step = ctx.step;
  c.scenario = ctx.scenario;
  c.measure = &m;
  std::vector<double> aux(field.aux_dim(), 0.0);
  c.aux = aux;
  const auto cache = field.prepare(c);
  c.cache = cache.get();
  std::vector<double> b(d), s(d * d), g(d * d), a(d * d), grad(d), hess(d * d);
  for (std::size_t n = 0; n < N; ++n) {
    const auto x = m.point(n);
    c.particle = n;
    field.drift(c, x, b);
    field.sigma(c, x, s);
    field.gamma(c, x, g);
    for (std::size_t i = 0; i < d; ++i) {
      const char* bad = !std::isfinite(b[i]) ? "drift" : nullptr;
      for (std::size_t j = 0; j < d && !bad; ++j) {
        if (!std::isfinite(s[i * d + j])) bad = "sigma";
        else if (!std::isfinite(g[i * d + j])) bad = "gamma";
      }
      if (bad)
        throw std::domain_error(fmt::format("non-finite {} at t={} atom {} (x0={})", bad, ctx.t, n, x[0]));
    }
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        double acc = 0.0;
        for (std::size_t k = 0; k < d; ++k) acc += s[i * d + k] * s[j * d + k] + g[i * d + k] * g[j * d + k];
        a[i * d + j] = acc;
      }
    for (std::size_t q = 0; q < K; ++q) {
      F.basis()[q].eval(x, grad, hess);
      double dp = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        dp += b[i] * grad[i];
        for (std::size_t j = 0; j < d; ++j) dp += 0.5 * a[i * d + j] * hess[i * d + j];
      }
      out.drift_part[n * K + q] = dp;
      for (std::size_t k = 0; k < d; ++k) {
        double acc = 0.0;
        for (std::size_t i = 0; i < d; ++i) acc += grad[i] * g[i * d + k];
        out.u[(n * K + q) * d + k] = acc;
      }
    }
  }
  return out;
}

}  // namespace

double generator_M(const CylindricalFunctional& F, const MeasureView& m, const CoefficientField& field,
                   const GeneratorContext& ctx) {
  const std::size_t d = m.dim(), K = F.size(), N = m.size();
  const auto data = atom_data(F, m, field, ctx);
  const auto z = F.features(m);
  const auto g = F.gradient_at(z);
  const auto H = F.hessian_at(z);

  double single = 0.0;
  for (std::size_t n = 0; n < N; ++n) {
    double acc = 0.0;
    for (std::size_t q = 0; q < K; ++q) acc += g[q] * data.drift_part[n * K + q];
    single += m.weight(n) * acc;
  }

  auto pair_term = [&](std::size_t n, std::size_t p) {
    double acc = 0.0;
    for (std::size_t i = 0; i < K; ++i)
      for (std::size_t j = 0; j < K; ++j) {
        const double h = H[i * K + j];
        if (h == 0.0) continue;
        double dot = 0.0;
        for (std::size_t k = 0; k < d; ++k) dot += data.u[(n * K + i) * d + k] * data.u[(p * K + j) * d + k];
        acc += h * dot;
      }
    return acc;
  };

  double dbl = 0.0;
  if (N <= 2000) {
    for (std::size_t n = 0; n < N; ++n) {
      double row = 0.0;
      for (std::size_t p = 0; p < N; ++p) row += m.weight(p) * pair_term(n, p);
      dbl += m.weight(n) * row;
    }
  } else {
    // Importance-free subsample: pairs drawn proportionally to the product weights.
    std::vector<double> cum(N);
    double acc = 0.0;
    for (std::size_t n = 0; n < N; ++n) cum[n] = (acc += m.weight(n));
    RandomStream rng(0x5eed5eedULL ^ N);
    auto draw = [&] {
      const double u = rng.uniform() * acc;
      return static_cast<std::size_t>(std::lower_bound(cum.begin(), cum.end(), u) - cum.begin());
    };
    const std::size_t pairs = 1000000;
    for (std::size_t r = 0; r < pairs; ++r) {
      const std::size_t n = std::min(draw(), N - 1), p = std::min(draw(), N - 1);
      dbl += pair_term(n, p);
    }
    dbl *= acc * acc / static_cast<double>(pairs);
  }
  return single + 0.5 * dbl;
}

double generator_direct(const CylindricalFunctional& F, const MeasureView& m, const CoefficientField& field,
                        const GeneratorContext& ctx) {
  const std::size_t d = m.dim(), K = F.size(), N = m.size();
  const auto data = atom_data(F, m, field, ctx);
  const auto z = F.features(m);
  const auto g = F.gradient_at(z);
  const auto H = F.hessian_at(z);
  std::vector<double> Lphi(K, 0.0), U(K * d, 0.0);
  for (std::size_t n = 0; n < N; ++n) {
    const double w = m.weight(n);
    for (std::size_t q = 0; q < K; ++q) {
      Lphi[q] += w * data.drift_part[n * K + q];
      for (std::size_t k = 0; k < d; ++k) U[q * d + k] += w * data.u[(n * K + q) * d + k];
    }
  }
  double out = 0.0;
  for (std::size_t i = 0; i < K; ++i) {
    out += g[i] * Lphi[i];
    for (std::size_t j = 0; j < K; ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < d; ++k) dot += U[i * d + k] * U[j * d + k];
      out += 0.5 * H[i * K + j] * dot;
    }
  }
  return out;
}

}  // namespace mkv

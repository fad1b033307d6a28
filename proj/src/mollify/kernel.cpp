// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "mkv/checked_io.h"
#include "mkv/mollify.h"
#include "mkv/parallel.h"

namespace mkv {

double mollifier_normalizer(std::size_t dim) {
  if (dim == 0) throw std::invalid_argument("mollifier dimension must be positive");
  static std::mutex mu;
  static std::map<std::size_t, double> cache;
  std::lock_guard<std::mutex> lock(mu);
  if (auto it = cache.find(dim); it != cache.end()) return it->second;
  boost::math::quadrature::exp_sinh<double> integrator;
  const double k = static_cast<double>(dim) - 1.0;
  const double radial =
      integrator.integrate([k](double r) { return std::pow(r, k) * std::exp(-std::sqrt(1.0 + r * r)); });
  const double half = 0.5 * static_cast<double>(dim);
  const double sphere = 2.0 * std::pow(std::numbers::pi, half) / boost::math::tgamma(half);
  const double c = 1.0 / (sphere * radial);
  cache.emplace(dim, c);
  return c;
}

MollifierKernel::MollifierKernel(double n, std::size_t dim) : n_(n), d_(dim), c_(mollifier_normalizer(dim)) {
  if (!(n > 0.0) || !std::isfinite(n)) throw std::invalid_argument("mollifier scale must be positive");
}

double MollifierKernel::m2() const { return std::sqrt(static_cast<double>(d_)); }

double MollifierKernel::value(std::span<const double> x) const {
  if (x.size() != d_) throw std::invalid_argument("mollifier point has the wrong dimension");
  double r2 = 0.0;
  for (double v : x) r2 += n_ * n_ * v * v;
  return std::pow(n_, static_cast<double>(d_)) * c_ * std::exp(-std::sqrt(1.0 + r2));
}

double MollifierKernel::value1(double x) const {
  const double y = n_ * x;
  return std::pow(n_, static_cast<double>(d_)) * c_ * std::exp(-std::sqrt(1.0 + y * y));
}

double MollifierKernel::log_value1(double x) const {
  const double y = n_ * x;
  return static_cast<double>(d_) * std::log(n_) + std::log(c_) - std::sqrt(1.0 + y * y);
}

double MollifierKernel::eval(std::span<const double> x, std::span<double> grad, std::span<double> hess) const {
  const double v = value(x);
  double r2 = 0.0;
  for (double xi : x) r2 += n_ * n_ * xi * xi;
  const double s = std::sqrt(1.0 + r2);
  // In y = n x: grad rho = -y/s rho, Hess rho = rho [y y^T / s^2 - I / s + y y^T / s^3].
  if (!grad.empty())
    for (std::size_t i = 0; i < d_; ++i) grad[i] = -n_ * (n_ * x[i]) / s * v;
  if (!hess.empty())
    for (std::size_t i = 0; i < d_; ++i)
      for (std::size_t j = 0; j < d_; ++j) {
        const double yy = n_ * x[i] * n_ * x[j];
        hess[i * d_ + j] = n_ * n_ * v * (yy / (s * s) + yy / (s * s * s) - (i == j ? 1.0 / s : 0.0));
      }
  return v;
}

double MollifierKernel::total_mass() const {
  boost::math::quadrature::exp_sinh<double> integrator;
  const double k = static_cast<double>(d_) - 1.0;
  const double n = n_, c = c_;
  const double dd = static_cast<double>(d_);
  const double radial = integrator.integrate([=](double r) {
    return std::pow(n, dd) * c * std::pow(r, k) * std::exp(-std::sqrt(1.0 + n * n * r * r));
  });
  const double half = 0.5 * dd;
  return 2.0 * std::pow(std::numbers::pi, half) / boost::math::tgamma(half) * radial;
}

MollifyGrid default_mollify_grid(const MeasureView& mu, const MollifierKernel& kernel) {
  if (mu.dim() != 1 || mu.size() == 0) throw std::invalid_argument("mollify grid needs a non-empty 1-d measure");
  double lo = mu.point1(0), hi = lo;
  for (std::size_t i = 1; i < mu.size(); ++i) {
    lo = std::min(lo, mu.point1(i));
    hi = std::max(hi, mu.point1(i));
  }
  const double margin = 40.0 / kernel.scale();
  const double step = 1.0 / (8.0 * kernel.scale());
  MollifyGrid g;
  g.x_min = lo - margin;
  g.x_max = hi + margin;
  g.n_points = static_cast<std::size_t>(std::ceil((g.x_max - g.x_min) / step)) + 1;
  return g;
}

namespace {

struct AtomCoefficients {
  std::vector<double> x, w, b, a, g;
};

AtomCoefficients evaluate_atoms(const CoefficientField& field, const MeasureView& mu, double t) {
  if (field.dim() != 1 || mu.dim() != 1) throw std::invalid_argument("coefficient tables are implemented for d = 1");
  AtomCoefficients out;
  EvalContext c;
  c.t = t;
  c.measure = &mu;
  std::vector<double> aux(field.aux_dim(), 0.0);
  c.aux = aux;
  const auto cache = field.prepare(c);
  c.cache = cache.get();
  for (std::size_t j = 0; j < mu.size(); ++j) {
    const double xj = mu.point1(j);
    const double xs[1] = {xj};
    double b, s, g;
    c.particle = j;
    field.drift(c, xs, std::span<double>(&b, 1));
    field.sigma(c, xs, std::span<double>(&s, 1));
    field.gamma(c, xs, std::span<double>(&g, 1));
    if (!std::isfinite(b) || !std::isfinite(s) || !std::isfinite(g))
      throw std::domain_error("non-finite coefficient at atom " + std::to_string(j));
    out.x.push_back(xj);
    out.w.push_back(mu.weight(j));
    out.b.push_back(b);
    out.a.push_back(s * s + g * g);
    out.g.push_back(g);
  }
  return out;
}

}  // namespace

CoefficientTable smooth_coefficients(const CoefficientField& field, const MeasureView& mu,
                                     const MollifierKernel& kernel, const MollifyGrid& grid, double t,
                                     std::size_t workers) {
  if (kernel.dim() != 1) throw std::invalid_argument("coefficient tables are implemented for d = 1");
  if (grid.n_points < 2 || !(grid.x_max > grid.x_min)) throw std::invalid_argument("invalid mollify grid");
  const auto atoms = evaluate_atoms(field, mu, t);
  const std::size_t G = grid.n_points, N = atoms.x.size();
  CoefficientTable tab;
  tab.scale = kernel.scale();
  tab.dx = (grid.x_max - grid.x_min) / static_cast<double>(G - 1);
  tab.x.resize(G);
  tab.density.resize(G);
  tab.b.resize(G);
  tab.a.resize(G);
  tab.gamma.resize(G);
  tab.valid.assign(G, 0);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const double floor_log = std::log(1e-300);
  std::vector<double> logw(N);
  for (std::size_t j = 0; j < N; ++j) logw[j] = atoms.w[j] > 0.0 ? std::log(atoms.w[j]) : -INFINITY;
  parallel_chunks(G, workers, [&](std::size_t begin, std::size_t end) {
    std::vector<double> e(N);
    for (std::size_t q = begin; q < end; ++q) {
      const double x = grid.x_min + tab.dx * static_cast<double>(q);
      tab.x[q] = x;
      double m = -INFINITY;
      for (std::size_t j = 0; j < N; ++j) {
        e[j] = logw[j] + kernel.log_value1(x - atoms.x[j]);
        m = std::max(m, e[j]);
      }
      double s0 = 0.0, sb = 0.0, sa = 0.0, sg = 0.0;
      for (std::size_t j = 0; j < N; ++j) {
        const double u = std::exp(e[j] - m);
        s0 += u;
        sb += u * atoms.b[j];
        sa += u * atoms.a[j];
        sg += u * atoms.g[j];
      }
      const double log_den = m + std::log(s0);
      if (!std::isfinite(log_den) || log_den < floor_log) {
        tab.density[q] = std::isfinite(log_den) ? std::exp(log_den) : 0.0;
        tab.b[q] = tab.a[q] = tab.gamma[q] = nan;
        continue;
      }
      tab.valid[q] = 1;
      tab.density[q] = std::exp(log_den);
      tab.b[q] = sb / s0;
      tab.a[q] = sa / s0;
      tab.gamma[q] = sg / s0;
    }
  });
  tab.n_invalid = static_cast<std::size_t>(std::count(tab.valid.begin(), tab.valid.end(), 0));
  return tab;
}

CoefficientTable smooth_coefficients(const CoefficientField& field, const MeasureView& mu,
                                     const MollifierKernel& kernel, double t) {
  return smooth_coefficients(field, mu, kernel, default_mollify_grid(mu, kernel), t);
}

JensenReport jensen_mollified(const CoefficientTable& table, const CoefficientField& field, const MeasureView& mu,
                              double p, TableColumn column, double t) {
  if (!(p >= 1.0)) throw std::invalid_argument("Jensen exponent must be >= 1");
  const auto atoms = evaluate_atoms(field, mu, t);
  const auto& col = column == TableColumn::drift ? table.b : table.a;
  JensenReport rep;
  for (std::size_t q = 0; q < table.x.size(); ++q)
    if (table.valid[q]) rep.lhs += table.dx * table.density[q] * std::pow(std::abs(col[q]), p);
  const auto& raw = column == TableColumn::drift ? atoms.b : atoms.a;
  for (std::size_t j = 0; j < raw.size(); ++j) rep.rhs += atoms.w[j] * std::pow(std::abs(raw[j]), p);
  return rep;
}

void write_table_csv(const CoefficientTable& table, const std::string& path) {
  std::ostringstream os;
  os << "x,b,a,gamma\n";
  for (std::size_t q = 0; q < table.x.size(); ++q)
    os << exact(table.x[q]) << ',' << exact(table.b[q]) << ',' << exact(table.a[q]) << ','
       << exact(table.gamma[q]) << '\n';
  write_checked(path, os.str());
}

}  // namespace mkv

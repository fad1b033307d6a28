// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "mkv/mollify.h"

namespace mkv {

CutoffMap::CutoffMap(double radius) : R_(radius) {
  if (!(radius > 0.0) || !std::isfinite(radius)) throw std::invalid_argument("cutoff radius must be positive");
}

// chi = 1 - S(s), s = (r - R)/R, S(s) = 10 s^3 - 15 s^4 + 6 s^5.
double CutoffMap::chi(double r) const {
  const double s = (r - R_) / R_;
  if (s <= 0.0) return 1.0;
  if (s >= 1.0) return 0.0;
  return 1.0 - s * s * s * (10.0 + s * (-15.0 + 6.0 * s));
}

double CutoffMap::chi_prime(double r) const {
  const double s = (r - R_) / R_;
  if (s <= 0.0 || s >= 1.0) return 0.0;
  return -30.0 * s * s * (1.0 - s) * (1.0 - s) / R_;
}

double CutoffMap::chi_second(double r) const {
  const double s = (r - R_) / R_;
  if (s <= 0.0 || s >= 1.0) return 0.0;
  return -60.0 * s * (1.0 - s) * (1.0 - 2.0 * s) / (R_ * R_);
}

void CutoffMap::jet(double x, double& value, double& d1, double& d2) const {
  const double r = std::abs(x);
  const double c = chi(r), c1 = chi_prime(r), c2 = chi_second(r);
  // pi(x) = chi(|x|) x; d/dx chi(|x|) = sign(x) chi'(|x|), and x sign(x) = |x|.
  value = c * x;
  d1 = c + r * c1;
  const double sgn = x < 0.0 ? -1.0 : 1.0;
  d2 = sgn * (2.0 * c1 + r * c2);
}

CutoffProjection cutoff_projection(const CoefficientField& field, const MeasureView& mu, double R, double dx,
                                   double t) {
  if (field.dim() != 1 || mu.dim() != 1) throw std::invalid_argument("cutoff projection is implemented for d = 1");
  if (!(dx > 0.0)) throw std::invalid_argument("cutoff bin width must be positive");
  const CutoffMap map(R);
  CutoffProjection out;
  EvalContext c;
  c.t = t;
  c.measure = &mu;
  std::vector<double> aux(field.aux_dim(), 0.0);
  c.aux = aux;
  const auto cache = field.prepare(c);
  c.cache = cache.get();
  const std::size_t N = mu.size();
  std::vector<long long> bin(N);
  long long kmin = std::numeric_limits<long long>::max(), kmax = std::numeric_limits<long long>::min();
  for (std::size_t j = 0; j < N; ++j) {
    const double x = mu.point1(j);
    double y, p1, p2;
    map.jet(x, y, p1, p2);
    const double xs[1] = {x};
    double b, s, g;
    c.particle = j;
    field.drift(c, xs, std::span<double>(&b, 1));
    field.sigma(c, xs, std::span<double>(&s, 1));
    field.gamma(c, xs, std::span<double>(&g, 1));
    if (!std::isfinite(b) || !std::isfinite(s) || !std::isfinite(g))
      throw std::domain_error("non-finite coefficient at atom " + std::to_string(j));
    const double a = s * s + g * g;
    out.image.push_back(y);
    out.weights.push_back(mu.weight(j));
    out.b_integrand.push_back(p1 * b + 0.5 * a * p2);
    out.a_integrand.push_back(p1 * p1 * a);
    out.gamma_integrand.push_back(p1 * g);
    bin[j] = std::llround(y / dx);
    kmin = std::min(kmin, bin[j]);
    kmax = std::max(kmax, bin[j]);
  }
  auto& tab = out.table;
  tab.scale = R;
  tab.dx = dx;
  const std::size_t B = N == 0 ? 0 : static_cast<std::size_t>(kmax - kmin + 1);
  std::vector<double> mass(B, 0.0), sb(B, 0.0), sa(B, 0.0), sg(B, 0.0);
  for (std::size_t j = 0; j < N; ++j) {
    const auto k = static_cast<std::size_t>(bin[j] - kmin);
    const double w = out.weights[j];
    mass[k] += w;
    sb[k] += w * out.b_integrand[j];
    sa[k] += w * out.a_integrand[j];
    sg[k] += w * out.gamma_integrand[j];
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t k = 0; k < B; ++k) {
    tab.x.push_back(static_cast<double>(kmin + static_cast<long long>(k)) * dx);
    tab.density.push_back(mass[k] / dx);
    const bool ok = mass[k] > 0.0;
    tab.valid.push_back(ok ? 1 : 0);
    tab.b.push_back(ok ? sb[k] / mass[k] : nan);
    tab.a.push_back(ok ? sa[k] / mass[k] : nan);
    tab.gamma.push_back(ok ? sg[k] / mass[k] : nan);
    if (!ok) ++tab.n_invalid;
  }
  return out;
}

JensenReport jensen_cutoff(const CutoffProjection& proj, double p, TableColumn column) {
  if (!(p >= 1.0)) throw std::invalid_argument("Jensen exponent must be >= 1");
  const auto& tab = proj.table;
  const auto& col = column == TableColumn::drift ? tab.b : tab.a;
  const auto& raw = column == TableColumn::drift ? proj.b_integrand : proj.a_integrand;
  JensenReport rep;
  for (std::size_t k = 0; k < tab.x.size(); ++k)
    if (tab.valid[k]) rep.lhs += tab.density[k] * tab.dx * std::pow(std::abs(col[k]), p);
  for (std::size_t j = 0; j < raw.size(); ++j) rep.rhs += proj.weights[j] * std::pow(std::abs(raw[j]), p);
  return rep;
}

PsdReport check_psd_defect(std::span<const double> a, std::span<const double> gamma, std::size_t dim,
                           std::span<const char> valid) {
  if (dim == 0 || a.size() != gamma.size() || a.size() % (dim * dim) != 0)
    throw std::invalid_argument("PSD check: misaligned tables");
  const std::size_t P = a.size() / (dim * dim);
  if (!valid.empty() && valid.size() != P) throw std::invalid_argument("PSD check: validity mask misaligned");
  PsdReport rep;
  rep.min_eigenvalue = std::numeric_limits<double>::infinity();
  for (std::size_t q = 0; q < P; ++q) {
    if (!valid.empty() && !valid[q]) continue;
    const double* A = a.data() + q * dim * dim;
    const double* G = gamma.data() + q * dim * dim;
    double ev;
    if (dim == 1) {
      ev = A[0] - G[0] * G[0];
    } else {
      Eigen::MatrixXd D(dim, dim);
      for (std::size_t i = 0; i < dim; ++i)
        for (std::size_t j = 0; j < dim; ++j) {
          double gg = 0.0;
          for (std::size_t k = 0; k < dim; ++k) gg += G[i * dim + k] * G[j * dim + k];
          D(i, j) = 0.5 * (A[i * dim + j] + A[j * dim + i]) - gg;
        }
      ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(D, Eigen::EigenvaluesOnly).eigenvalues()(0);
    }
    ++rep.checked;
    if (ev < rep.min_eigenvalue) {
      rep.min_eigenvalue = ev;
      rep.argmin = q;
    }
  }
  return rep;
}

PsdReport check_psd_defect(const CoefficientTable& table) {
  return check_psd_defect(table.a, table.gamma, 1, table.valid);
}

}  // namespace mkv

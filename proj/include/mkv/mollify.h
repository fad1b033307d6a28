// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mkv/coefficients.h"
#include "mkv/measure.h"

namespace mkv {

// rho(x) = c exp(-sqrt(1 + |x|^2)) normalised on R^d, rho_n(x) = n^d rho(n x).
// |grad rho_n| <= n M1 rho_n and |Hess rho_n|_F <= n^2 M2 rho_n with M1 = 1,
// M2 = sqrt(d).
class MollifierKernel {
 public:
  MollifierKernel(double n, std::size_t dim = 1);

  double scale() const { return n_; }
  std::size_t dim() const { return d_; }
  // c above; computed once per dimension by double-exponential quadrature.
  double normalizer() const { return c_; }
  double m1() const { return 1.0; }
  double m2() const;

  double value(std::span<const double> x) const;
  double value1(double x) const;
  // Writes gradient (d) and Hessian (d*d); returns the value.
  double eval(std::span<const double> x, std::span<double> grad, std::span<double> hess) const;
  // int rho_n over R^d by radial quadrature; should be 1.
  double total_mass() const;
  // log rho_n(x), for ratios that would underflow.
  double log_value1(double x) const;

 private:
  double n_;
  std::size_t d_;
  double c_;
};

// Normaliser of exp(-sqrt(1 + |x|^2)) on R^d.
double mollifier_normalizer(std::size_t dim);

// One-dimensional coefficient tables on query points. Invalid points are
// ones where the defining ratio has no support (underflowed denominator or
// empty bin); their values are NaN.
struct CoefficientTable {
  double scale = 0.0;  // kernel index n, or cutoff radius R
  std::vector<double> x;
  std::vector<double> density;  // mu * rho_n, or mu^R mass per unit length
  std::vector<double> b, a, gamma;
  std::vector<char> valid;
  std::size_t n_invalid = 0;
  double dx = 0.0;
};

struct MollifyGrid {
  double x_min = 0.0, x_max = 0.0;
  std::size_t n_points = 0;
};
// Covers the atoms with 40/n of margin at spacing 1/(8n).
MollifyGrid default_mollify_grid(const MeasureView& mu, const MollifierKernel& kernel);

// b^{rho_n} = ((b mu) * rho_n) / (mu * rho_n), same for a and gamma, d = 1.
CoefficientTable smooth_coefficients(const CoefficientField& field, const MeasureView& mu,
                                     const MollifierKernel& kernel, const MollifyGrid& grid,
                                     double t = 0.0, std::size_t workers = 0);
CoefficientTable smooth_coefficients(const CoefficientField& field, const MeasureView& mu,
                                     const MollifierKernel& kernel, double t = 0.0);

// chi_R = 1 on |x| <= R, 0 on |x| >= 2R, quintic smoothstep between, so
// chi_R is C^2 with |chi'| <= 1.875/R and |chi''| <= 5.7736/R^2.
class CutoffMap {
 public:
  explicit CutoffMap(double radius);
  double radius() const { return R_; }
  double chi(double r) const;
  double chi_prime(double r) const;
  double chi_second(double r) const;
  // pi^R(x) = chi_R(|x|) x in one dimension, with its first two derivatives.
  double apply(double x) const { return chi(std::abs(x)) * x; }
  void jet(double x, double& value, double& d1, double& d2) const;
  static constexpr double kGradBound = 1.875;
  static constexpr double kHessBound = 5.7735026918962584;

 private:
  double R_;
};

struct CutoffProjection {
  CoefficientTable table;         // bins of the image pi^R(X)
  std::vector<double> image;      // relocated atoms pi^R(x_j)
  std::vector<double> weights;    // their masses
  std::vector<double> b_integrand, a_integrand, gamma_integrand;  // per atom
};
// b^R(y) = E[pi' b + a pi''/2 | pi^R(X) = y], a^R = E[pi'^2 a | .],
// gamma^R = E[pi' gamma | .], conditional averages over bins of width dx.
CutoffProjection cutoff_projection(const CoefficientField& field, const MeasureView& mu, double R,
                                   double dx, double t = 0.0);

struct PsdReport {
  double min_eigenvalue = 0.0;
  std::size_t argmin = 0;
  std::size_t checked = 0;
};
// Smallest eigenvalue of a - gamma gamma^T over all valid table points;
// a and gamma hold d*d entries per point.
PsdReport check_psd_defect(std::span<const double> a, std::span<const double> gamma, std::size_t dim,
                           std::span<const char> valid = {});
PsdReport check_psd_defect(const CoefficientTable& table);

// Jensen contraction: lhs = <smoothed measure, |coef^smoothed|^p>,
// rhs = <mu, |coef|^p>; slack = lhs - rhs must not be positive.
struct JensenReport {
  double lhs = 0.0, rhs = 0.0;
  double slack() const { return lhs - rhs; }
};
enum class TableColumn { drift, diffusion };
JensenReport jensen_mollified(const CoefficientTable& table, const CoefficientField& field,
                              const MeasureView& mu, double p, TableColumn column, double t = 0.0);
JensenReport jensen_cutoff(const CutoffProjection& proj, double p, TableColumn column);

void write_table_csv(const CoefficientTable& table, const std::string& path);

}  // namespace mkv

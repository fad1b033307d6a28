// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mkv/coefficients.h"
#include "mkv/measure.h"
#include "mkv/test_function.h"

namespace mkv {

// F(m) = f(<m, phi_1>, ..., <m, phi_K>) with f in C^2(R^K).
class CylindricalFunctional {
 public:
  using Value = std::function<double(std::span<const double>)>;
  using Vector = std::function<void(std::span<const double>, std::span<double>)>;

  CylindricalFunctional(std::string id, TestBasis basis, Value f, Vector grad, Vector hess);

  static CylindricalFunctional linear(std::string id, TestBasis basis, std::vector<double> coeffs);
  // f(z) = z^T Q z / 2 + c^T z, Q symmetric.
  static CylindricalFunctional quadratic(std::string id, TestBasis basis, std::vector<double> Q,
                                         std::vector<double> c);
  // f(z) = exp(-s . z)
  static CylindricalFunctional exponential(std::string id, TestBasis basis, std::vector<double> s);
  // f(z) = sin(w . z)
  static CylindricalFunctional sine(std::string id, TestBasis basis, std::vector<double> w);
  static CylindricalFunctional constant(std::string id, TestBasis basis, double value);

  const std::string& id() const { return id_; }
  const TestBasis& basis() const { return basis_; }
  std::size_t size() const { return basis_.size(); }

  std::vector<double> features(const MeasureView& m) const;
  double operator()(const MeasureView& m) const { return value_at(features(m)); }
  double value_at(std::span<const double> z) const { return f_(z); }
  std::vector<double> gradient_at(std::span<const double> z) const;
  std::vector<double> hessian_at(std::span<const double> z) const;

 private:
  std::string id_;
  TestBasis basis_;
  Value f_;
  Vector grad_, hess_;
};

// Uncentred measure derivatives at m:
//   flat      = sum_i d_i f phi_i(v)
//   first     = D_m F(m, v)       = sum_i d_i f grad phi_i(v)
//   vertical  = D_v D_m F(m, v)   = sum_i d_i f Hess phi_i(v)
//   second    = D^2_m F(m, v, v') = sum_ij d_ij f grad phi_i(v) grad phi_j(v')^T
struct LionsDerivatives {
  double flat = 0.0;
  std::vector<double> first;     // d
  std::vector<double> vertical;  // d*d
  std::vector<double> second;    // d*d
};
LionsDerivatives lions_derivatives(const CylindricalFunctional& F, const MeasureView& m,
                                   std::span<const double> v, std::span<const double> v_prime);

struct GeneratorContext {
  double t = 0.0;
  std::size_t step = 0;
  const Scenario* scenario = nullptr;
};

// M F(m) = int [D_m F . b + 1/2 D_v D_m F : a] dm + 1/2 int int D^2_m F : gamma(v) gamma(v')^T dm dm,
// with the double integral summed over all pairs for N <= 2000 atoms and
// over 1e6 seeded random pairs above that.
double generator_M(const CylindricalFunctional& F, const MeasureView& m, const CoefficientField& field,
                   const GeneratorContext& ctx = {});

// The same quantity from its cylindrical expansion
//   sum_i d_i f <m, L phi_i> + 1/2 sum_ij d_ij f <m, grad phi_i^T gamma> . <m, grad phi_j^T gamma>.
double generator_direct(const CylindricalFunctional& F, const MeasureView& m, const CoefficientField& field,
                        const GeneratorContext& ctx = {});

}  // namespace mkv

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace mkv {

enum class TestFunctionKind { gaussian_bump, polynomial_bump };

struct TestJet {
  double value = 0.0;
  std::vector<double> gradient;  // d
  std::vector<double> hessian;   // d*d, row-major
};

// Compactly supported C^2 test functions.
//
// gaussian_bump:   exp(-|y|^2 / (2 w^2)) * (1 - |y|^2/r^2)^3 on |y| < r, y = x - c.
// polynomial_bump: P(u.y) * chi(|y|), chi = 1 on |y| <= r0 and decays to 0 at r
//                  through a quintic smoothstep, so chi is C^2.
class TestFunction {
 public:
  static TestFunction gaussian_bump(std::vector<double> center, double radius, double width);
  static TestFunction polynomial_bump(std::vector<double> center, double radius, double plateau,
                                      std::vector<double> poly = {1.0},
                                      std::vector<double> direction = {});

  TestFunctionKind kind() const { return kind_; }
  std::size_t dim() const { return center_.size(); }
  const std::vector<double>& center() const { return center_; }
  double radius() const { return radius_; }
  double width() const { return width_; }
  double plateau() const { return plateau_; }
  const std::vector<double>& poly() const { return poly_; }
  const std::vector<double>& direction() const { return direction_; }

  double value(std::span<const double> x) const;
  // Writes value, gradient (d) and Hessian (d*d); any output span may be empty.
  double eval(std::span<const double> x, std::span<double> grad, std::span<double> hess) const;
  TestJet jet(std::span<const double> x) const;

  // One-dimensional fast path: value, first and second derivative.
  void eval1(double x, double& v, double& d1, double& d2) const;
  double value1(double x) const {
    double v, a, b;
    eval1(x, v, a, b);
    return v;
  }

  bool in_support(std::span<const double> x) const;
  bool operator==(const TestFunction& o) const;
  std::string describe() const;

 private:
  TestFunction() = default;

  TestFunctionKind kind_ = TestFunctionKind::gaussian_bump;
  std::vector<double> center_;
  double radius_ = 1.0;
  double width_ = 1.0;
  double plateau_ = 0.0;
  std::vector<double> poly_;
  std::vector<double> direction_;
};

// K >= 1 pairwise distinct test functions of one dimension.
class TestBasis {
 public:
  explicit TestBasis(std::vector<TestFunction> functions);

  std::size_t size() const { return functions_.size(); }
  std::size_t dim() const { return functions_.front().dim(); }
  const TestFunction& operator[](std::size_t i) const { return functions_[i]; }
  const std::vector<TestFunction>& functions() const { return functions_; }

 private:
  std::vector<TestFunction> functions_;
};

TestJet eval_test_function(const TestFunction& phi, std::span<const double> x);

// Gaussian-type bumps on a one-dimensional lattice with dyadic radii: level l
// has radius (x_max - x_min) / 2^(l+1) and centres spaced by one radius.
TestBasis dyadic_bump_basis(double x_min, double x_max, std::size_t levels);

}  // namespace mkv

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mkv/test_function.h"

namespace mkv {

// Non-owning view of a finite measure: weighted atoms, or a one-dimensional
// piecewise-constant density on cells (atoms are cell centres, weight is
// density times cell width). Backing storage must outlive the view.
class MeasureView {
 public:
  static MeasureView atoms(std::span<const double> points, std::size_t dim);
  static MeasureView weighted(std::span<const double> points, std::span<const double> weights,
                              std::size_t dim);
  static MeasureView cells(std::span<const double> centers, std::span<const double> density,
                           double width);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return n_; }
  bool is_cells() const { return cells_; }
  double cell_width() const { return cells_ ? scale_ : 0.0; }
  double mass() const { return mass_; }

  std::span<const double> point(std::size_t i) const { return {points_.data() + i * dim_, dim_}; }
  double point1(std::size_t i) const { return points_[i * dim_]; }
  double weight(std::size_t i) const { return weights_.empty() ? scale_ : weights_[i] * scale_; }

  const std::vector<double>& mean() const { return mean_; }
  double pair(const TestFunction& phi) const;
  template <class F>
  double pair_fn(F&& f) const {
    double s = 0.0;
    for (std::size_t i = 0; i < n_; ++i) s += weight(i) * f(point(i));
    return s;
  }
  // Raw moment of order k of coordinate `coord`.
  double moment(unsigned k, std::size_t coord = 0) const;
  double central_moment(unsigned k, std::size_t coord = 0) const;
  // Gaussian kernel density estimate at x with bandwidth h.
  double kde(std::span<const double> x, double h) const;
  // Gradient of the kernel density estimate.
  void kde_gradient(std::span<const double> x, double h, std::span<double> out) const;

 private:
  MeasureView() = default;
  void finish();

  std::span<const double> points_;
  std::span<const double> weights_;
  std::size_t dim_ = 1;
  std::size_t n_ = 0;
  double scale_ = 1.0;
  bool cells_ = false;
  double mass_ = 0.0;
  std::vector<double> mean_;
};

// Owning empirical measure; weights are normalised to sum to one.
class EmpiricalMeasure {
 public:
  EmpiricalMeasure(std::vector<double> points, std::size_t dim, std::vector<double> weights = {});

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return points_.size() / dim_; }
  const std::vector<double>& points() const { return points_; }
  const std::vector<double>& weights() const { return weights_; }
  MeasureView view() const;

 private:
  std::vector<double> points_;
  std::size_t dim_;
  std::vector<double> weights_;
};

}  // namespace mkv

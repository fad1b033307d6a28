// SPDX-License-Identifier: Apache-2.0
#include "mkv/measure.h"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace mkv {

MeasureView MeasureView::atoms(std::span<const double> points, std::size_t dim) {
  if (dim == 0 || points.size() % dim != 0) throw std::invalid_argument("atoms do not match dimension");
  if (points.empty()) throw std::invalid_argument("empty measure");
  MeasureView v;
  v.points_ = points;
  v.dim_ = dim;
  v.n_ = points.size() / dim;
  v.scale_ = 1.0 / static_cast<double>(v.n_);
  v.finish();
  return v;
}

MeasureView MeasureView::weighted(std::span<const double> points, std::span<const double> weights,
                                  std::size_t dim) {
  if (dim == 0 || points.size() % dim != 0) throw std::invalid_argument("atoms do not match dimension");
  if (points.empty()) throw std::invalid_argument("empty measure");
  if (weights.size() != points.size() / dim) throw std::invalid_argument("weights do not match atoms");
  MeasureView v;
  v.points_ = points;
  v.weights_ = weights;
  v.dim_ = dim;
  v.n_ = weights.size();
  v.scale_ = 1.0;
  v.finish();
  return v;
}

MeasureView MeasureView::cells(std::span<const double> centers, std::span<const double> density,
                               double width) {
  if (centers.empty() || centers.size() != density.size())
    throw std::invalid_argument("cell centres and density differ in length");
  if (!(width > 0.0)) throw std::invalid_argument("cell width must be positive");
  MeasureView v;
  v.points_ = centers;
  v.weights_ = density;
  v.dim_ = 1;
  v.n_ = centers.size();
  v.scale_ = width;
  v.cells_ = true;
  v.finish();
  return v;
}

void MeasureView::finish() {
  mean_.assign(dim_, 0.0);
  mass_ = 0.0;
  for (std::size_t i = 0; i < n_; ++i) {
    const double w = weight(i);
    mass_ += w;
    for (std::size_t j = 0; j < dim_; ++j) mean_[j] += w * points_[i * dim_ + j];
  }
  if (mass_ > 0.0)
    for (double& m : mean_) m /= mass_;
}

double MeasureView::pair(const TestFunction& phi) const {
  if (phi.dim() != dim_) throw std::invalid_argument("test function dimension mismatch");
  double s = 0.0;
  if (dim_ == 1) {
    for (std::size_t i = 0; i < n_; ++i) s += weight(i) * phi.value1(points_[i]);
    return s;
  }
  for (std::size_t i = 0; i < n_; ++i) s += weight(i) * phi.value(point(i));
  return s;
}

double MeasureView::moment(unsigned k, std::size_t coord) const {
  double s = 0.0;
  for (std::size_t i = 0; i < n_; ++i) s += weight(i) * std::pow(points_[i * dim_ + coord], k);
  return s;
}

double MeasureView::central_moment(unsigned k, std::size_t coord) const {
  const double m = mean_[coord];
  double s = 0.0;
  for (std::size_t i = 0; i < n_; ++i) s += weight(i) * std::pow(points_[i * dim_ + coord] - m, k);
  return s / mass_;
}

double MeasureView::kde(std::span<const double> x, double h) const {
  const double norm = std::pow(2.0 * std::numbers::pi * h * h, -0.5 * static_cast<double>(dim_));
  double s = 0.0;
  for (std::size_t i = 0; i < n_; ++i) {
    double r2 = 0.0;
    for (std::size_t j = 0; j < dim_; ++j) {
      const double y = x[j] - points_[i * dim_ + j];
      r2 += y * y;
    }
    s += weight(i) * std::exp(-0.5 * r2 / (h * h));
  }
  return norm * s;
}

void MeasureView::kde_gradient(std::span<const double> x, double h, std::span<double> out) const {
  const double norm = std::pow(2.0 * std::numbers::pi * h * h, -0.5 * static_cast<double>(dim_));
  for (double& o : out) o = 0.0;
  for (std::size_t i = 0; i < n_; ++i) {
    double r2 = 0.0;
    for (std::size_t j = 0; j < dim_; ++j) {
      const double y = x[j] - points_[i * dim_ + j];
      r2 += y * y;
    }
    const double k = weight(i) * std::exp(-0.5 * r2 / (h * h)) * norm / (h * h);
    for (std::size_t j = 0; j < dim_; ++j) out[j] -= k * (x[j] - points_[i * dim_ + j]);
  }
}

EmpiricalMeasure::EmpiricalMeasure(std::vector<double> points, std::size_t dim,
                                   std::vector<double> weights)
    : points_(std::move(points)), dim_(dim), weights_(std::move(weights)) {
  if (dim_ == 0 || points_.size() % dim_ != 0) throw std::invalid_argument("atoms do not match dimension");
  const std::size_t n = points_.size() / dim_;
  if (n == 0) throw std::invalid_argument("empty ensemble");
  if (weights_.empty()) weights_.assign(n, 1.0 / static_cast<double>(n));
  if (weights_.size() != n) throw std::invalid_argument("weights do not match atoms");
  double total = 0.0;
  for (double w : weights_) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("weights must be nonnegative");
    total += w;
  }
  if (!(total > 0.0)) throw std::invalid_argument("weights sum to zero");
  for (double& w : weights_) w /= total;
}

MeasureView EmpiricalMeasure::view() const { return MeasureView::weighted(points_, weights_, dim_); }

}  // namespace mkv

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "mkv/measure.h"

namespace mkv {

// Sorted one-dimensional law with an evaluable quantile function. Atoms give
// a step quantile; cell densities are uniform inside each cell.
class Quantiles {
 public:
  explicit Quantiles(const MeasureView& m);
  double operator()(double u) const;
  double min() const { return xs_.front(); }
  double max() const { return xs_.back(); }

 private:
  std::vector<double> xs_;
  std::vector<double> cum_;  // cumulative normalised weight after each atom
  double half_width_ = 0.0;
  bool cells_ = false;
};

// W1 between one-dimensional laws via midpoint quadrature of
// |F^-1(u) - G^-1(u)| at n_quantiles levels. Both inputs are normalised.
double wasserstein1_1d(const MeasureView& mu, const MeasureView& nu, std::size_t n_quantiles);
double wasserstein1_1d(const Quantiles& mu, const Quantiles& nu, std::size_t n_quantiles);

}  // namespace mkv

// SPDX-License-Identifier: Apache-2.0
#include "mkv/wasserstein.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mkv {

Quantiles::Quantiles(const MeasureView& m) {
  if (m.dim() != 1) throw std::invalid_argument("wasserstein1_1d needs one-dimensional measures");
  if (!(m.mass() > 0.0)) throw std::invalid_argument("measure has no mass");
  const std::size_t n = m.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return m.point1(a) < m.point1(b); });
  xs_.resize(n);
  cum_.resize(n);
  double acc = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    xs_[k] = m.point1(order[k]);
    acc += m.weight(order[k]);
    cum_[k] = acc;
  }
  for (double& c : cum_) c /= acc;
  cum_.back() = 1.0;
  cells_ = m.is_cells();
  half_width_ = 0.5 * m.cell_width();
}

double Quantiles::operator()(double u) const {
  const auto it = std::lower_bound(cum_.begin(), cum_.end(), u);
  const std::size_t k = it == cum_.end() ? cum_.size() - 1 : static_cast<std::size_t>(it - cum_.begin());
  if (!cells_) return xs_[k];
  const double lo = k == 0 ? 0.0 : cum_[k - 1];
  const double w = cum_[k] - lo;
  const double frac = w > 0.0 ? (u - lo) / w : 0.5;
  return xs_[k] - half_width_ + 2.0 * half_width_ * frac;
}

double wasserstein1_1d(const Quantiles& mu, const Quantiles& nu, std::size_t n_quantiles) {
  if (n_quantiles < 2) throw std::invalid_argument("need at least two quantile levels");
  double s = 0.0;
  const double n = static_cast<double>(n_quantiles);
  for (std::size_t k = 0; k < n_quantiles; ++k) {
    const double u = (static_cast<double>(k) + 0.5) / n;
    s += std::abs(mu(u) - nu(u));
  }
  return s / n;
}

double wasserstein1_1d(const MeasureView& mu, const MeasureView& nu, std::size_t n_quantiles) {
  if (mu.dim() != 1 || nu.dim() != 1)
    throw std::invalid_argument("wasserstein1_1d needs one-dimensional measures");
  return wasserstein1_1d(Quantiles(mu), Quantiles(nu), n_quantiles);
}

}  // namespace mkv

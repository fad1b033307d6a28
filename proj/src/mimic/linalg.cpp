// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "mkv/mimic.h"

namespace mkv {

PsdSqrt psd_sqrt(std::span<const double> a, std::size_t dim) {
  if (dim == 0 || a.size() != dim * dim) throw std::invalid_argument("psd_sqrt: matrix shape mismatch");
  Eigen::MatrixXd m(dim, dim);
  double scale = 1.0;
  for (std::size_t i = 0; i < dim; ++i)
    for (std::size_t j = 0; j < dim; ++j) {
      m(i, j) = a[i * dim + j];
      if (!std::isfinite(m(i, j))) throw std::invalid_argument("psd_sqrt: non-finite entry");
      scale = std::max(scale, std::abs(m(i, j)));
    }
  for (std::size_t i = 0; i < dim; ++i)
    for (std::size_t j = i + 1; j < dim; ++j)
      if (std::abs(m(i, j) - m(j, i)) > 1e-10 * scale) throw std::invalid_argument("psd_sqrt: matrix is not symmetric");
  PsdSqrt out;
  out.root.resize(dim * dim);
  if (dim == 1) {
    if (a[0] < 0.0) out.clipped = -a[0];
    out.root[0] = std::sqrt(std::max(0.0, a[0]));
    return out;
  }
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  Eigen::VectorXd ev = es.eigenvalues();
  for (Eigen::Index k = 0; k < ev.size(); ++k) {
    if (ev(k) < 0.0) {
      out.clipped = std::max(out.clipped, -ev(k));
      ev(k) = 0.0;
    }
    ev(k) = std::sqrt(ev(k));
  }
  const Eigen::MatrixXd r = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  for (std::size_t i = 0; i < dim; ++i)
    for (std::size_t j = 0; j < dim; ++j) out.root[i * dim + j] = 0.5 * (r(i, j) + r(j, i));
  return out;
}

}  // namespace mkv

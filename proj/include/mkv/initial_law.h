// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "mkv/rng.h"

namespace mkv {

// Law of X_0: point mass, Gaussian (diagonal), uniform box, or a finite mixture.
class InitialLaw {
 public:
  enum class Kind { point_mass, gaussian, uniform, mixture };

  static InitialLaw point_mass(std::vector<double> x0);
  static InitialLaw gaussian(std::vector<double> mean, std::vector<double> stddev);
  static InitialLaw uniform(std::vector<double> lo, std::vector<double> hi);
  static InitialLaw mixture(std::vector<double> weights, std::vector<InitialLaw> parts);

  Kind kind() const { return kind_; }
  std::size_t dim() const { return a_.empty() ? parts_.front().dim() : a_.size(); }
  void sample(RandomStream& rng, std::span<double> out) const;

  double mean(std::size_t coord = 0) const;
  double variance(std::size_t coord = 0) const;
  // Mass of (lo, hi] in coordinate 0; used to seed grid densities.
  double interval_mass(double lo, double hi) const;
  // Copy in which point masses and narrower Gaussians in coordinate 0 get
  // standard deviation min_width.
  InitialLaw widened(double min_width) const;

  const std::vector<double>& a() const { return a_; }
  const std::vector<double>& b() const { return b_; }

 private:
  InitialLaw() = default;

  Kind kind_ = Kind::point_mass;
  std::vector<double> a_, b_;  // point/mean/lo and -/stddev/hi
  std::vector<double> weights_;
  std::vector<InitialLaw> parts_;
};

}  // namespace mkv

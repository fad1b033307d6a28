// SPDX-License-Identifier: Apache-2.0
#include "mkv/initial_law.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace mkv {

InitialLaw InitialLaw::point_mass(std::vector<double> x0) {
  if (x0.empty()) throw std::invalid_argument("point mass needs a location");
  InitialLaw l;
  l.kind_ = Kind::point_mass;
  l.a_ = std::move(x0);
  return l;
}

InitialLaw InitialLaw::gaussian(std::vector<double> mean, std::vector<double> stddev) {
  if (mean.empty() || mean.size() != stddev.size())
    throw std::invalid_argument("gaussian law needs matching mean and stddev");
  for (double s : stddev)
    if (!(s >= 0.0)) throw std::invalid_argument("stddev must be nonnegative");
  InitialLaw l;
  l.kind_ = Kind::gaussian;
  l.a_ = std::move(mean);
  l.b_ = std::move(stddev);
  return l;
}

InitialLaw InitialLaw::uniform(std::vector<double> lo, std::vector<double> hi) {
  if (lo.empty() || lo.size() != hi.size()) throw std::invalid_argument("uniform law needs matching bounds");
  for (std::size_t i = 0; i < lo.size(); ++i)
    if (!(hi[i] > lo[i])) throw std::invalid_argument("uniform law needs lo < hi");
  InitialLaw l;
  l.kind_ = Kind::uniform;
  l.a_ = std::move(lo);
  l.b_ = std::move(hi);
  return l;
}

InitialLaw InitialLaw::mixture(std::vector<double> weights, std::vector<InitialLaw> parts) {
  if (parts.empty() || weights.size() != parts.size())
    throw std::invalid_argument("mixture needs one weight per component");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw std::invalid_argument("mixture weights must be nonnegative");
    total += w;
  }
  if (!(total > 0.0)) throw std::invalid_argument("mixture weights sum to zero");
  for (const auto& p : parts)
    if (p.dim() != parts.front().dim()) throw std::invalid_argument("mixture components differ in dimension");
  InitialLaw l;
  l.kind_ = Kind::mixture;
  for (double& w : weights) w /= total;
  l.weights_ = std::move(weights);
  l.parts_ = std::move(parts);
  return l;
}

void InitialLaw::sample(RandomStream& rng, std::span<double> out) const {
  switch (kind_) {
    case Kind::point_mass:
      for (std::size_t i = 0; i < a_.size(); ++i) out[i] = a_[i];
      return;
    case Kind::gaussian:
      for (std::size_t i = 0; i < a_.size(); ++i) out[i] = a_[i] + b_[i] * rng.normal();
      return;
    case Kind::uniform:
      for (std::size_t i = 0; i < a_.size(); ++i) out[i] = rng.uniform(a_[i], b_[i]);
      return;
    case Kind::mixture: {
      const double u = rng.uniform();
      double acc = 0.0;
      std::size_t k = 0;
      for (; k + 1 < weights_.size(); ++k) {
        acc += weights_[k];
        if (u < acc) break;
      }
      parts_[k].sample(rng, out);
      return;
    }
  }
}

double InitialLaw::mean(std::size_t coord) const {
  switch (kind_) {
    case Kind::point_mass:
    case Kind::gaussian:
      return a_[coord];
    case Kind::uniform:
      return 0.5 * (a_[coord] + b_[coord]);
    case Kind::mixture: {
      double m = 0.0;
      for (std::size_t k = 0; k < parts_.size(); ++k) m += weights_[k] * parts_[k].mean(coord);
      return m;
    }
  }
  return 0.0;
}

double InitialLaw::variance(std::size_t coord) const {
  switch (kind_) {
    case Kind::point_mass:
      return 0.0;
    case Kind::gaussian:
      return b_[coord] * b_[coord];
    case Kind::uniform: {
      const double w = b_[coord] - a_[coord];
      return w * w / 12.0;
    }
    case Kind::mixture: {
      const double m = mean(coord);
      double v = 0.0;
      for (std::size_t k = 0; k < parts_.size(); ++k) {
        const double mk = parts_[k].mean(coord);
        v += weights_[k] * (parts_[k].variance(coord) + (mk - m) * (mk - m));
      }
      return v;
    }
  }
  return 0.0;
}

double InitialLaw::interval_mass(double lo, double hi) const {
  switch (kind_) {
    case Kind::point_mass:
      return (a_[0] > lo && a_[0] <= hi) ? 1.0 : 0.0;
    case Kind::gaussian: {
      if (b_[0] == 0.0) return (a_[0] > lo && a_[0] <= hi) ? 1.0 : 0.0;
      const double z = b_[0] * std::numbers::sqrt2;
      return 0.5 * (std::erfc((lo - a_[0]) / z) - std::erfc((hi - a_[0]) / z));
    }
    case Kind::uniform: {
      const double l = std::max(lo, a_[0]), h = std::min(hi, b_[0]);
      return h > l ? (h - l) / (b_[0] - a_[0]) : 0.0;
    }
    case Kind::mixture: {
      double s = 0.0;
      for (std::size_t k = 0; k < parts_.size(); ++k) s += weights_[k] * parts_[k].interval_mass(lo, hi);
      return s;
    }
  }
  return 0.0;
}

InitialLaw InitialLaw::widened(double min_width) const {
  switch (kind_) {
    case Kind::point_mass:
      return gaussian(a_, std::vector<double>(a_.size(), min_width));
    case Kind::gaussian: {
      auto sd = b_;
      for (double& s : sd) s = std::max(s, min_width);
      return gaussian(a_, sd);
    }
    case Kind::uniform:
      return *this;
    case Kind::mixture: {
      std::vector<InitialLaw> parts;
      for (const auto& p : parts_) parts.push_back(p.widened(min_width));
      return mixture(weights_, std::move(parts));
    }
  }
  return *this;
}

}  // namespace mkv

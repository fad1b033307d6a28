// SPDX-License-Identifier: Apache-2.0
#include "mkv/time_grid.h"

#include <cmath>
#include <stdexcept>
#include <string>

namespace mkv {

TimeGrid::TimeGrid(double horizon, std::size_t n_steps) : horizon_(horizon), n_steps_(n_steps) {
  if (!(horizon > 0.0) || !std::isfinite(horizon))
    throw std::invalid_argument("time grid horizon must be positive, got " + std::to_string(horizon));
  if (n_steps == 0) throw std::invalid_argument("time grid needs at least one step");
  dt_ = horizon / static_cast<double>(n_steps);
}

double TimeGrid::time(std::size_t k) const {
  if (k >= n_steps_) return k == n_steps_ ? horizon_ : static_cast<double>(k) * dt_;
  return static_cast<double>(k) * dt_;
}

std::size_t TimeGrid::nearest_index(double t) const {
  if (t <= 0.0) return 0;
  if (t >= horizon_) return n_steps_;
  return static_cast<std::size_t>(std::llround(t / dt_));
}

}  // namespace mkv

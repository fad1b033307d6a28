// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>

namespace mkv {

// Uniform grid on [0, horizon] with n_steps intervals.
class TimeGrid {
 public:
  TimeGrid(double horizon, std::size_t n_steps);

  double horizon() const { return horizon_; }
  std::size_t n_steps() const { return n_steps_; }
  std::size_t n_nodes() const { return n_steps_ + 1; }
  double dt() const { return dt_; }
  // Node k; the last node is exactly the horizon.
  double time(std::size_t k) const;
  // Closest node to t, clamped to the grid.
  std::size_t nearest_index(double t) const;

  bool operator==(const TimeGrid& o) const {
    return horizon_ == o.horizon_ && n_steps_ == o.n_steps_;
  }

 private:
  double horizon_;
  std::size_t n_steps_;
  double dt_;
};

}  // namespace mkv

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mkv/time_grid.h"

namespace mkv {

// One realisation of the common Brownian path B on a time grid, B_0 = 0.
class Scenario {
 public:
  Scenario(TimeGrid grid, std::size_t dim, std::uint64_t seed, std::uint64_t index,
           std::vector<double> increments);

  const TimeGrid& grid() const { return grid_; }
  std::size_t dim() const { return dim_; }
  std::uint64_t seed() const { return seed_; }
  std::uint64_t index() const { return index_; }

  // B_{t_{k+1}} - B_{t_k}.
  std::span<const double> increment(std::size_t k) const {
    return {increments_.data() + k * dim_, dim_};
  }
  // B_{t_k}.
  std::span<const double> value(std::size_t k) const { return {path_.data() + k * dim_, dim_}; }
  const std::vector<double>& increments() const { return increments_; }

  // Same path seen on a grid with `factor` times fewer steps.
  Scenario coarsened(std::size_t factor) const;

  bool same_path(const Scenario& o) const {
    return grid_ == o.grid_ && dim_ == o.dim_ && increments_ == o.increments_;
  }

 private:
  TimeGrid grid_;
  std::size_t dim_;
  std::uint64_t seed_;
  std::uint64_t index_;
  std::vector<double> increments_;
  std::vector<double> path_;
};

using ScenarioPtr = std::shared_ptr<const Scenario>;

// Reproducible from (master_seed, scenario_index) alone.
Scenario make_scenario(const TimeGrid& grid, std::size_t dim, std::uint64_t master_seed,
                       std::uint64_t scenario_index);
std::vector<ScenarioPtr> make_scenarios(const TimeGrid& grid, std::size_t dim,
                                        std::uint64_t master_seed, std::uint64_t first_index,
                                        std::size_t count);

// CSV: "seed,scenario_index,d,n_steps,T" header and value row, then one row of
// d increments per step, then the checksum trailer.
std::string scenario_to_csv(const Scenario& s);
Scenario scenario_from_csv(const std::string& sealed_text, const std::string& origin = "scenario");
void save_scenario(const Scenario& s, const std::filesystem::path& path);
Scenario load_scenario(const std::filesystem::path& path);

}  // namespace mkv

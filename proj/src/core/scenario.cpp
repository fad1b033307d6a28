// SPDX-License-Identifier: Apache-2.0
#include "mkv/scenario.h"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "mkv/checked_io.h"
#include "mkv/rng.h"

namespace mkv {

Scenario::Scenario(TimeGrid grid, std::size_t dim, std::uint64_t seed, std::uint64_t index,
                   std::vector<double> increments)
    : grid_(grid), dim_(dim), seed_(seed), index_(index), increments_(std::move(increments)) {
  if (dim_ == 0) throw std::invalid_argument("scenario dimension must be positive");
  if (increments_.size() != grid_.n_steps() * dim_)
    throw std::invalid_argument("scenario increments do not match grid and dimension");
  path_.assign(grid_.n_nodes() * dim_, 0.0);
  for (std::size_t k = 0; k < grid_.n_steps(); ++k)
    for (std::size_t j = 0; j < dim_; ++j)
      path_[(k + 1) * dim_ + j] = path_[k * dim_ + j] + increments_[k * dim_ + j];
}

Scenario Scenario::coarsened(std::size_t factor) const {
  if (factor == 0 || grid_.n_steps() % factor != 0)
    throw std::invalid_argument("coarsening factor must divide the number of steps");
  const std::size_t n = grid_.n_steps() / factor;
  std::vector<double> inc(n * dim_, 0.0);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t j = 0; j < dim_; ++j)
      inc[k * dim_ + j] = path_[(k + 1) * factor * dim_ + j] - path_[k * factor * dim_ + j];
  return Scenario(TimeGrid(grid_.horizon(), n), dim_, seed_, index_, std::move(inc));
}

Scenario make_scenario(const TimeGrid& grid, std::size_t dim, std::uint64_t master_seed,
                       std::uint64_t scenario_index) {
  RandomStream rng = RandomStream::for_particle(master_seed, scenario_index, kCommonStream,
                                                Lane::brownian);
  const double sdt = std::sqrt(grid.dt());
  std::vector<double> inc(grid.n_steps() * dim);
  for (double& v : inc) v = sdt * rng.normal();
  return Scenario(grid, dim, master_seed, scenario_index, std::move(inc));
}

std::vector<ScenarioPtr> make_scenarios(const TimeGrid& grid, std::size_t dim,
                                        std::uint64_t master_seed, std::uint64_t first_index,
                                        std::size_t count) {
  std::vector<ScenarioPtr> out;
  out.reserve(count);
  for (std::size_t m = 0; m < count; ++m)
    out.push_back(std::make_shared<Scenario>(make_scenario(grid, dim, master_seed, first_index + m)));
  return out;
}

std::string scenario_to_csv(const Scenario& s) {
  std::ostringstream os;
  os << "seed,scenario_index,d,n_steps,T\n";
  os << s.seed() << ',' << s.index() << ',' << s.dim() << ',' << s.grid().n_steps() << ','
     << exact(s.grid().horizon()) << '\n';
  for (std::size_t k = 0; k < s.grid().n_steps(); ++k) {
    const auto inc = s.increment(k);
    for (std::size_t j = 0; j < s.dim(); ++j) os << (j ? "," : "") << exact(inc[j]);
    os << '\n';
  }
  return os.str();
}

Scenario scenario_from_csv(const std::string& sealed_text, const std::string& origin) {
  const std::string body = unseal(sealed_text, origin);
  std::istringstream is(body);
  std::string line;
  if (!std::getline(is, line) || line != "seed,scenario_index,d,n_steps,T")
    throw PersistenceError(origin + ": bad scenario header");
  if (!std::getline(is, line)) throw PersistenceError(origin + ": missing scenario metadata row");
  const auto meta = split(line, ',');
  if (meta.size() != 5) throw PersistenceError(origin + ": metadata row needs 5 fields");
  const std::uint64_t seed = parse_u64(meta[0]);
  const std::uint64_t index = parse_u64(meta[1]);
  const std::size_t dim = parse_u64(meta[2]);
  const std::size_t n_steps = parse_u64(meta[3]);
  const double horizon = parse_double(meta[4]);
  std::vector<double> inc;
  inc.reserve(n_steps * dim);
  std::size_t rows = 0;
  while (std::getline(is, line)) {
    const auto cells = split(line, ',');
    if (cells.size() != dim)
      throw PersistenceError(origin + ": increment row " + std::to_string(rows) + " has wrong width");
    for (auto c : cells) inc.push_back(parse_double(c));
    ++rows;
  }
  if (rows != n_steps)
    throw PersistenceError(origin + ": expected " + std::to_string(n_steps) + " increment rows, found " +
                           std::to_string(rows));
  return Scenario(TimeGrid(horizon, n_steps), dim, seed, index, std::move(inc));
}

void save_scenario(const Scenario& s, const std::filesystem::path& path) {
  write_checked(path, scenario_to_csv(s));
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PersistenceError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return scenario_from_csv(ss.str(), path.string());
}

}  // namespace mkv

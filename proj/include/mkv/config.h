// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mkv {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::size_t line, std::size_t column, const std::string& what);
  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t line_, column_;
};

// Flat "key = value" text with [section] headers; '#' and ';' start comments.
class Config {
 public:
  struct Entry {
    std::string value;
    std::size_t line = 0, column = 0;  // of the value
  };

  static Config parse(const std::string& text, const std::string& origin = "config");
  static Config load(const std::filesystem::path& path);

  const std::string& text() const { return text_; }
  const std::string& origin() const { return origin_; }
  std::uint64_t hash() const;

  bool has(const std::string& section, const std::string& key) const;
  const Entry* find(const std::string& section, const std::string& key) const;
  std::vector<std::string> keys(const std::string& section) const;
  std::vector<std::string> sections() const;
  std::size_t section_line(const std::string& section) const;

  std::string str(const std::string& section, const std::string& key, const std::string& fallback) const;
  double num(const std::string& section, const std::string& key, double fallback) const;
  std::uint64_t count(const std::string& section, const std::string& key, std::uint64_t fallback) const;
  bool flag(const std::string& section, const std::string& key, bool fallback) const;
  std::vector<double> list(const std::string& section, const std::string& key, std::vector<double> fallback) const;

  // Marks keys as understood; anything left over is reported by check_unused.
  void allow(const std::string& section, const std::vector<std::string>& keys);
  void check_unused() const;

 private:
  std::string text_, origin_;
  std::map<std::string, std::map<std::string, Entry>> data_;
  std::map<std::string, std::size_t> section_lines_;
  std::map<std::string, std::vector<std::string>> allowed_;
};

enum class ExperimentKind { hierarchy_check, mimicking, mfc_compare, mollify_suite, picard };
std::string to_string(ExperimentKind k);

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::hierarchy_check;
  std::uint64_t seed = 0;
  std::size_t n_particles = 1000;
  std::size_t n_scenarios = 4;
  double horizon = 1.0;
  std::size_t n_steps = 100;
  std::string family;                   // system family
  std::map<std::string, double> params;  // family parameters
  std::map<std::string, double> gates;   // tolerance overrides
  std::filesystem::path output;
  Config source;
};

// Parses and validates; throws ConfigError with a location.
ExperimentConfig parse_experiment_config(const std::string& text, const std::string& origin = "config");
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

struct GateResult {
  std::string name;
  double value = 0.0;
  double threshold = 0.0;
  bool passed = true;
};

struct RunSummary {
  std::vector<GateResult> gates;
  std::vector<std::string> artifacts;  // relative to the output directory
  int exit_code() const;
  std::vector<std::string> failing() const;
};

// Executes the pipeline, writes artifacts and manifest.json under `out`.
RunSummary run_experiment(const ExperimentConfig& config, const std::filesystem::path& out, std::size_t workers = 0);

// Reads a run directory back: verifies every artifact checksum listed in the
// manifest and returns a printable summary. Throws PersistenceError.
std::string report_artifacts(const std::filesystem::path& dir);

// Header and rows of a sealed numeric CSV table.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};
CsvTable read_table_csv(const std::filesystem::path& path);

}  // namespace mkv

// SPDX-License-Identifier: Apache-2.0
// mkv-cli: run, validate and inspect experiment directories.
#include <cstdlib>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "mkv/checked_io.h"
#include "mkv/config.h"
#include "mkv/parallel.h"

namespace {

int parse_failure(const mkv::ConfigError& e, const std::string& path) {
  std::cerr << path << ":" << e.what() << '\n';
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conditional McKean-Vlasov experiment runner"};
  app.require_subcommand(1);
  app.set_version_flag("--version", MKV_VERSION);

  std::string config_path, out_dir, artifact_dir;
  std::size_t workers = 0;
  auto* run = app.add_subcommand("run", "execute an experiment and write its artifacts");
  run->add_option("config", config_path, "experiment config")->required();
  run->add_option("-o,--output", out_dir, "output directory (overrides [experiment] output)");
  run->add_option("-j,--workers", workers, "worker threads (default: MKV_WORKERS, else 1)");
  auto* validate = app.add_subcommand("validate", "parse and validate a config without running it");
  validate->add_option("config", config_path, "experiment config")->required();
  auto* report = app.add_subcommand("report", "verify and summarise an artifact directory");
  report->add_option("artifact_dir", artifact_dir, "directory holding manifest.json")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*report) {
      std::cout << mkv::report_artifacts(artifact_dir);
      return 0;
    }
    mkv::ExperimentConfig cfg;
    try {
      cfg = mkv::load_experiment_config(config_path);
    } catch (const mkv::ConfigError& e) {
      return parse_failure(e, config_path);
    }
    if (*validate) {
      std::cout << fmt::format("{}: ok ({}, family {}, seed {}, config {})\n", config_path, mkv::to_string(cfg.kind),
                               cfg.family, cfg.seed, mkv::hex64(cfg.source.hash()));
      return 0;
    }
    std::filesystem::path out = out_dir.empty() ? cfg.output : std::filesystem::path(out_dir);
    if (out.empty()) out = std::filesystem::path("runs") / mkv::to_string(cfg.kind);
    if (workers == 0) workers = mkv::default_workers();
    const auto summary = mkv::run_experiment(cfg, out, workers);
    for (const auto& g : summary.gates)
      std::cout << fmt::format("{} {} = {:.6g} (threshold {:.6g})\n", g.passed ? "PASS" : "FAIL", g.name, g.value,
                               g.threshold);
    const auto failing = summary.failing();
    if (!failing.empty()) {
      std::cerr << "failing gates:";
      for (const auto& f : failing) std::cerr << ' ' << f;
      std::cerr << '\n';
    }
    std::cout << "artifacts in " << out.string() << '\n';
    return summary.exit_code();
  } catch (const mkv::PersistenceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fediod/config.hpp"
#include "fediod/data.hpp"
#include "fediod/federation.hpp"
#include "fediod/ledger.hpp"

namespace fediod {

struct SeedResult {
  std::uint64_t seed = 0;
  RunReport report;
  CommLedger ledger;
  /// Teacher checksums before and after distillation (fediod mode only).
  std::vector<std::uint64_t> teacher_checksums_before;
  std::vector<std::uint64_t> teacher_checksums_after;
};

struct ExperimentReport {
  RunConfig config;
  std::vector<SeedResult> seeds;
  double final_mean = 0.0;
  double final_std = 0.0;
  std::map<std::string, std::size_t> ledger_totals;
  double wall_clock_seconds = 0.0;
};

/// Train/test datasets described by the config. The test set is held out before any partitioning.
std::pair<Dataset, Dataset> load_datasets(const DatasetConfig& cfg);

/// One seed of the configured mode.
SeedResult run_seed(const RunConfig& cfg, const Dataset& train, const Dataset& test, std::uint64_t seed);

/// Every seed in order, then the mean/std join. Does not touch the filesystem beyond dataset loading.
ExperimentReport run_experiment(const RunConfig& cfg);

std::string report_json(const ExperimentReport& rep, bool include_wall_clock = true);
/// seed,step,l_gan_0..l_gan_{K-1},l_conf,l_unique,l_mimic,l_gan_generator
std::string losses_csv(const ExperimentReport& rep);
/// seed column followed by the ledger's own columns.
std::string ledger_csv(const ExperimentReport& rep);

/// report.json, losses.csv, ledger.csv and accuracy.svg under `dir` (created if needed).
void write_outputs(const ExperimentReport& rep, const std::string& dir);

}  // namespace fediod

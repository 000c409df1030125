#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "fediod/federation.hpp"

namespace fediod {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Mode { fediod, fedavg, standalone, centralized };
std::string to_string(Mode m);
Mode mode_from_string(const std::string& s);

struct DatasetConfig {
  std::string kind = "blobs";  // "blobs" or "idx"
  std::size_t classes = 4;
  std::size_t per_class = 400;
  std::size_t dim = 2;
  double spread = 0.15;
  std::uint64_t seed = 7;
  double test_fraction = 0.2;
  // idx only; test files are optional, otherwise the holdout split is used
  std::string train_images;
  std::string train_labels;
  std::string test_images;
  std::string test_labels;

  bool operator==(const DatasetConfig&) const = default;
};

struct RunConfig {
  Mode mode = Mode::fediod;
  DatasetConfig dataset;
  std::size_t nodes = 5;
  double alpha = 0.3;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  ArchSpec arch;
  LocalTrainHp local;
  FediodHp fediod;
  FedAvgHp fedavg;
  std::string output_dir = "out";

  /// Throws ConfigError naming the first offending field.
  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

RunConfig parse_config_text(const std::string& text);
/// Reads and validates a JSON config; unknown keys are rejected.
RunConfig parse_config(const std::string& path);
/// Serializes every field, so parse_config_text(write_config(c)) == c.
std::string write_config(const RunConfig& cfg);

}  // namespace fediod

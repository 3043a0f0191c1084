#pragma once

#include <cstdint>
#include <json.hpp>
#include <optional>
#include <string>
#include <utility>

#include "apn/data.hpp"
#include "apn/model.hpp"
#include "apn/train.hpp"

namespace apn {

struct SyntheticData {
  SyntheticSpec spec;
  int train_per_class = 16;
  int val_per_class = 16;
  std::uint64_t seed = 0;
};

struct DataConfig {
  std::string train_dir;
  std::string val_dir;
  std::optional<SyntheticData> synthetic;  // used when no directories are given
};

/// Everything a command needs. `seed` drives model initialization, batch
/// order and augmentation.
struct RunConfig {
  ModelSpec model;
  TrainConfig train;
  DataConfig data;
  std::uint64_t seed = 0;
  std::string output = "apn-out";
  int input_size = 224;

  // Throws ConfigError on any invariant violation; returns warnings.
  std::vector<std::string> validate() const;
  nlohmann::ordered_json to_json() const;
};

/// Defaults for a named architecture. The toy presets also carry the
/// desk-scale training schedule and synthetic data.
RunConfig default_run_config(std::string_view arch);

/// Strict parse: unknown keys and wrong types throw ConfigError with the
/// offending JSON path. "arch" selects the base preset; other keys override.
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);

ops::Padding parse_padding(std::string_view name);

/// Train and validation splits named by the config.
std::pair<Dataset, Dataset> load_data(const DataConfig& data);

}  // namespace apn

#pragma once

// Dataset ("NCLD") and weights ("NCLW") files, plus the flat JSON run config.

#include <filesystem>
#include <string>

#include <json.hpp>

#include "ncl/param_store.hpp"
#include "ncl/synth.hpp"
#include "ncl/trainer.hpp"

namespace ncl {

inline constexpr char kDatasetMagic[] = "NCLD";
inline constexpr char kWeightsMagic[] = "NCLW";

/// Payload order per sample: text tokens, text attention, reference tokens,
/// reference attention, target tokens, target attention.
void write_dataset(const Dataset& data, const std::filesystem::path& path);
/// Throws IoError when unreadable, DataError when malformed.
Dataset read_dataset(const std::filesystem::path& path);

void save_weights(const ParamStore& params, const std::filesystem::path& path);
ParamStore load_weights(const std::filesystem::path& path);

/// Everything one run needs. A single seed drives both data and training.
struct RunConfig {
  DatasetSpec dataset;
  TrainConfig train;
  std::string dataset_path;
  std::string out_dir;

  void set_seed(std::uint64_t seed) {
    dataset.seed = seed;
    train.seed = seed;
  }
  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

nlohmann::json to_json(const DatasetSpec& spec);
nlohmann::json to_json(const TrainConfig& config);
nlohmann::json to_json(const RunConfig& config);

/// Missing keys keep their defaults; unknown keys and wrong types throw ConfigError.
DatasetSpec dataset_spec_from_json(const nlohmann::json& j);
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace ncl

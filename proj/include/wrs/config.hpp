#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "wrs/dataset.hpp"
#include "wrs/layers.hpp"
#include "wrs/optim.hpp"
#include "wrs/regularize.hpp"

namespace wrs {

struct DatasetConfig {
  enum class Kind { synthetic, idx };
  Kind kind = Kind::synthetic;
  SyntheticSpec synthetic;
  // Synthetic data follows the experiment seed unless a seed is given.
  bool synthetic_seed_fixed = false;
  std::filesystem::path images;
  std::filesystem::path labels;
  // Optional separate IDX test files; otherwise a holdout split is used.
  std::filesystem::path test_images;
  std::filesystem::path test_labels;
  double holdout_fraction = 0.1;
};

struct ExperimentConfig {
  std::string run_id = "run";
  ArchitectureSpec architecture;
  BatchNormConfig batchnorm;
  DatasetConfig dataset;
  OptimizerConfig optimizer;
  RegularizerConfig regularizer;
  std::size_t batch_size = 100;
  std::size_t epochs = 10;
  LrSchedule lr;
  std::uint64_t seed = 0;
  std::size_t metrics_every = 50;
  // Completed-epoch counts after which a snapshot is written (0 = before training).
  std::vector<std::size_t> snapshot_epochs;
  // Per-slice columns in the metrics CSV.
  bool slice_metrics = true;

  // Throws ConfigError. Checks referenced files exist.
  void validate() const;
};

// Relative dataset paths resolve against base_dir. Unknown keys are errors.
ExperimentConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
nlohmann::json config_to_json(const ExperimentConfig& config);
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json load_json_file(const std::filesystem::path& path);

// FNV-1a over the canonical JSON form, as 16 hex digits.
std::string config_hash(const ExperimentConfig& config);

struct LoadedData {
  Dataset train;
  Dataset test;
  std::string test_split;  // "test" or "holdout"
};

// Builds or reads the data and views samples with the architecture's input shape.
LoadedData load_experiment_data(const ExperimentConfig& config);

}  // namespace wrs

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "wrs/harness.hpp"

namespace wrs {

// One hyperparameter axis: a dotted path into the config JSON
// ("regularizer.lambda") and the values it takes.
struct SweepAxis {
  std::string path;
  std::vector<nlohmann::json> values;
};

struct SweepSpec {
  nlohmann::json base;  // ExperimentConfig JSON
  std::filesystem::path base_dir;
  std::vector<SweepAxis> axes;
  std::size_t replicas = 1;  // replica r runs with seed base.seed + r
  std::size_t budget = 1000; // cap on cells * replicas

  void validate() const;
};

// {"base": {...} or "path.json", "axes": [{"path": ..., "values": [...]}],
//  "replicas": N, "budget": N}
SweepSpec sweep_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
SweepSpec load_sweep_spec(const std::filesystem::path& path);

// Cartesian product of the axis values, first axis slowest.
std::vector<std::vector<nlohmann::json>> sweep_cells(const SweepSpec& spec);
// Base config JSON with the cell's values and the replica seed applied.
nlohmann::json cell_config_json(const SweepSpec& spec, const std::vector<nlohmann::json>& cell, std::size_t replica);

struct RunOutcome {
  std::size_t cell = 0;
  std::size_t replica = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string status;  // completed, nan_abort, error
  std::string error;
  double final_test_acc = 0.0;
  double best_test_acc = 0.0;
  double final_train_acc = 0.0;
};

struct CellSummary {
  std::vector<nlohmann::json> values;
  std::size_t completed = 0;
  std::size_t failed = 0;
  // Mean and sample standard deviation over completed replicas.
  double mean_final_test_acc = 0.0;
  double std_final_test_acc = 0.0;
  double mean_best_test_acc = 0.0;
  double std_best_test_acc = 0.0;
  double mean_final_train_acc = 0.0;
  double std_final_train_acc = 0.0;
  std::vector<std::string> errors;
};

struct SweepResult {
  std::vector<CellSummary> cells;
  std::vector<RunOutcome> runs;
  std::size_t best_cell = 0;  // highest mean final test accuracy
};

struct SweepOptions {
  // Empty: nothing written. Otherwise runs/cellC_repR/ per run, runs.csv and sweep.csv.
  std::filesystem::path out_dir;
  std::size_t jobs = 1;
};

// Failures are recorded per run and the sweep continues.
SweepResult run_sweep(const SweepSpec& spec, const SweepOptions& options = {});

// Mean and sample standard deviation (0 for fewer than two values).
std::pair<double, double> mean_std(const std::vector<double>& values);

}  // namespace wrs

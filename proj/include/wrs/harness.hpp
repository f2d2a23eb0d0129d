#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "wrs/analysis.hpp"
#include "wrs/config.hpp"

namespace wrs {

// Bumped whenever the metrics column order changes.
inline constexpr int kMetricsSchemaVersion = 1;

struct MetricsRow {
  std::string kind;  // init, step, epoch_end, nan_abort
  std::size_t epoch = 0;  // 0-based epoch the row belongs to
  std::uint64_t step = 0; // optimizer steps taken so far
  // NaN when not measured. Step rows carry the mean mini-batch train loss
  // since the previous row and no accuracies.
  double train_loss = 0.0;
  double train_acc = 0.0;
  double test_loss = 0.0;
  double test_acc = 0.0;
  double lr = 0.0;
  bool wrs_fired = false;            // a rescale fired since the previous row
  std::size_t zero_norm_warnings = 0; // zero-norm slices skipped since the previous row
  std::vector<WeightMetrics> weights;
};

// Header for a network: fixed columns, then per weight layer w<k> the
// layer-level norms, then (optionally) per-slice columns w<k>.s<j>.*.
std::vector<std::string> metrics_columns(const Network& network, bool slice_columns);
std::vector<std::string> metrics_fields(const MetricsRow& row, const std::string& run_id, const std::string& split,
                                        bool slice_columns);

// Permutation of 0..n-1 for one epoch, derived from (seed, epoch) only.
std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed, std::size_t epoch);

struct RunOptions {
  // Empty: keep everything in memory and write nothing.
  std::filesystem::path out_dir;
  // Called for every row as it is produced.
  std::function<void(const MetricsRow&)> on_row;
  // Keep the network after training in RunResult::network.
  bool keep_network = false;
};

enum class RunStatus { completed, nan_abort };

struct RunResult {
  RunStatus status = RunStatus::completed;
  std::string diagnostic;
  std::uint64_t steps = 0;
  std::vector<MetricsRow> rows;
  double final_train_acc = 0.0;
  double final_test_acc = 0.0;
  double best_test_acc = 0.0;
  std::string test_split;
  std::optional<Network> network;
};

// Files in out_dir: config.json (resolved config), run.json (schema,
// columns, summary), metrics.csv (appended and flushed row by row),
// snapshots/epoch_NNNN.snap, final.snap, last_good.snap on a NaN abort.
RunResult run_experiment(const ExperimentConfig& config, const RunOptions& options = {});
RunResult run_experiment(const ExperimentConfig& config, const LoadedData& data, const RunOptions& options = {});

}  // namespace wrs

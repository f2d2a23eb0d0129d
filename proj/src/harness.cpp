#include "wrs/harness.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "wrs/csv.hpp"
#include "wrs/snapshot.hpp"
#include "wrs/training.hpp"

namespace wrs {

namespace fs = std::filesystem;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

std::string first_nonfinite(const Network& net, bool gradients) {
  for (const auto& p : net.parameters()) {
    if (gradients && !p.value.has_grad()) continue;
    if (!all_finite(gradients ? p.value.grad() : p.value.data())) return p.name;
  }
  return {};
}

std::string snapshot_name(std::size_t epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%04zu.snap", epoch);
  return buf;
}

class MetricsWriter {
 public:
  MetricsWriter(const fs::path& path, std::vector<std::string> header, std::string run_id, std::string split,
                bool slices)
      : run_id_(std::move(run_id)), split_(std::move(split)), slices_(slices) {
    if (path.empty()) return;
    out_.open(path, std::ios::binary | std::ios::trunc);
    if (!out_) throw FormatError("cannot write " + path.string());
    put(csv_line(header));
  }

  void write(const MetricsRow& row) {
    if (out_.is_open()) put(csv_line(metrics_fields(row, run_id_, split_, slices_)));
  }

 private:
  // One write per line, flushed, so an interrupted run leaves whole rows.
  void put(const std::string& line) {
    out_.write(line.data(), static_cast<std::streamsize>(line.size()));
    out_.flush();
  }

  std::ofstream out_;
  std::string run_id_;
  std::string split_;
  bool slices_;
};

}  // namespace

std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), 0);
  const std::uint64_t key = splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(epoch) + 0x632be59bd9b4e019ull));
  for (std::size_t i = n; i > 1; --i) {
    const std::uint64_t r = splitmix64(key + i);
    const auto j = static_cast<std::size_t>(r % i);
    std::swap(p[i - 1], p[j]);
  }
  return p;
}

std::vector<std::string> metrics_columns(const Network& network, bool slice_columns) {
  std::vector<std::string> cols{"run_id",   "kind",    "epoch",     "step",     "split",     "train_loss",
                                "train_acc", "test_loss", "test_acc", "lr",     "wrs_fired", "zero_norm_warnings"};
  std::size_t k = 0;
  for (const auto& p : network.parameters()) {
    if (!p.is_weight()) continue;
    const std::string w = "w" + std::to_string(k++);
    for (const char* m : {".weight_norm", ".grad_norm", ".effective_ratio"}) cols.push_back(w + m);
    if (!slice_columns) continue;
    for (std::size_t j = 0; j < p.slice_count(); ++j) {
      const std::string s = w + ".s" + std::to_string(j);
      for (const char* m : {".weight_norm", ".grad_norm", ".effective_ratio"}) cols.push_back(s + m);
    }
  }
  return cols;
}

std::vector<std::string> metrics_fields(const MetricsRow& row, const std::string& run_id, const std::string& split,
                                        bool slice_columns) {
  std::vector<std::string> f{run_id,
                             row.kind,
                             std::to_string(row.epoch),
                             std::to_string(row.step),
                             split,
                             format_double(row.train_loss),
                             format_double(row.train_acc),
                             format_double(row.test_loss),
                             format_double(row.test_acc),
                             format_double(row.lr),
                             row.wrs_fired ? "1" : "0",
                             std::to_string(row.zero_norm_warnings)};
  const bool has_grad = row.kind != "init";
  auto grad = [&](double v) { return has_grad ? format_double(v) : std::string(); };
  for (const auto& m : row.weights) {
    f.push_back(format_double(m.weight_norm));
    f.push_back(grad(m.grad_norm));
    f.push_back(grad(m.effective_ratio));
    if (!slice_columns) continue;
    for (std::size_t j = 0; j < m.slice_weight_norms.size(); ++j) {
      f.push_back(format_double(m.slice_weight_norms[j]));
      f.push_back(grad(m.slice_grad_norms[j]));
      f.push_back(grad(m.slice_effective_ratios[j]));
    }
  }
  return f;
}

RunResult run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  config.validate();
  return run_experiment(config, load_experiment_data(config), options);
}

RunResult run_experiment(const ExperimentConfig& config, const LoadedData& data, const RunOptions& options) {
  config.validate();
  if (data.train.size() < 2) throw ValidationError("training set needs at least 2 samples");
  const bool write = !options.out_dir.empty();
  const fs::path snap_dir = options.out_dir / "snapshots";
  if (write) fs::create_directories(snap_dir);

  auto net = Network::build(config.architecture, config.seed, config.batchnorm);
  if (net.classes() < data.train.classes) {
    throw ConfigError("architecture has " + std::to_string(net.classes()) + " outputs but the data has " +
                      std::to_string(data.train.classes) + " classes");
  }
  Optimizer opt(config.optimizer, net.parameters().size());
  const auto columns = metrics_columns(net, config.slice_metrics);
  const std::string hash = config_hash(config);

  if (write) {
    std::ofstream(options.out_dir / "config.json") << config_to_json(config).dump(2) << '\n';
  }
  MetricsWriter writer(write ? options.out_dir / "metrics.csv" : fs::path{}, columns, config.run_id, data.test_split,
                       config.slice_metrics);

  RunResult result;
  result.test_split = data.test_split;
  result.best_test_acc = -1.0;
  auto emit = [&](MetricsRow row) {
    writer.write(row);
    if (options.on_row) options.on_row(row);
    result.rows.push_back(std::move(row));
  };
  auto snapshot = [&](const fs::path& path, std::size_t epoch, std::uint64_t step, const std::vector<NamedArray>& a) {
    if (!write) return;
    save_snapshot(path, a, {{"config_hash", hash}, {"run_id", config.run_id}, {"epoch", epoch}, {"step", step}});
  };
  auto evaluated_row = [&](const char* kind, std::size_t epoch, std::uint64_t step, double lr) {
    MetricsRow row;
    row.kind = kind;
    row.epoch = epoch;
    row.step = step;
    row.lr = lr;
    const auto tr = evaluate(net, data.train);
    const auto te = evaluate(net, data.test);
    row.train_loss = tr.loss;
    row.train_acc = tr.accuracy;
    row.test_loss = te.loss;
    row.test_acc = te.accuracy;
    row.weights = record_step_metrics(net, opt);
    result.final_train_acc = tr.accuracy;
    result.final_test_acc = te.accuracy;
    result.best_test_acc = std::max(result.best_test_acc, te.accuracy);
    return row;
  };

  emit(evaluated_row("init", 0, 0, config.lr.at(0)));
  if (std::count(config.snapshot_epochs.begin(), config.snapshot_epochs.end(), 0u)) {
    snapshot(snap_dir / snapshot_name(0), 0, 0, network_arrays(net));
  }

  std::uint64_t step = 0;
  double loss_sum = 0.0;
  std::size_t batches_since = 0, zero_since = 0;
  bool fired_since = false;
  const std::size_t n = data.train.size();
  const std::size_t bs = std::min(config.batch_size, n);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = config.lr.at(epoch);
    const auto perm = epoch_permutation(n, config.seed, epoch);
    for (std::size_t start = 0; start < n; start += bs) {
      const std::size_t len = std::min(bs, n - start);
      if (len < 2) break;  // batch norm needs two samples
      const std::span<const std::size_t> idx(perm.data() + start, len);
      const auto last_good = network_arrays(net);
      const auto labels = data.train.batch_labels(idx);

      std::string bad;
      double loss = kNaN;
      {
        const Tensor batch = data.train.batch(idx);
        loss = loss_and_gradients(net, batch, labels);
        if (!std::isfinite(loss)) {
          bad = "loss is " + std::to_string(loss);
        } else if (const auto p = first_nonfinite(net, true); !p.empty()) {
          bad = "gradient of " + p + " is not finite";
        }
      }
      if (bad.empty()) {
        opt.step(net.parameters(), decay_coefficients(net, config.regularizer, epoch), lr);
        if (const auto p = first_nonfinite(net, false); !p.empty()) bad = "update left " + p + " not finite";
      }
      if (!bad.empty()) {
        load_network_arrays(net, last_good);
        MetricsRow row;
        row.kind = "nan_abort";
        row.epoch = epoch;
        row.step = step;
        row.lr = lr;
        row.train_loss = loss;
        row.train_acc = row.test_loss = row.test_acc = kNaN;
        row.weights = record_step_metrics(net, opt);
        emit(std::move(row));
        snapshot(options.out_dir / "last_good.snap", epoch, step, last_good);
        result.status = RunStatus::nan_abort;
        result.diagnostic = "step " + std::to_string(step + 1) + " (epoch " + std::to_string(epoch) + "): " + bad;
        result.steps = step;
        break;
      }
      ++step;
      const auto outcome = apply_regularizer_step(net, config.regularizer, opt, step, epoch);
      fired_since = fired_since || outcome.fired;
      zero_since += outcome.report.zero_norm_skipped;
      loss_sum += loss;
      ++batches_since;

      if (step % config.metrics_every == 0) {
        MetricsRow row;
        row.kind = "step";
        row.epoch = epoch;
        row.step = step;
        row.lr = lr;
        row.train_loss = loss_sum / static_cast<double>(batches_since);
        row.train_acc = row.test_loss = row.test_acc = kNaN;
        row.wrs_fired = fired_since;
        row.zero_norm_warnings = zero_since;
        row.weights = record_step_metrics(net, opt);
        emit(std::move(row));
        loss_sum = 0.0;
        batches_since = 0;
        fired_since = false;
        zero_since = 0;
      }
    }
    if (result.status == RunStatus::nan_abort) break;
    auto row = evaluated_row("epoch_end", epoch, step, lr);
    row.wrs_fired = fired_since;
    row.zero_norm_warnings = zero_since;
    emit(std::move(row));
    fired_since = false;
    zero_since = 0;
    if (std::count(config.snapshot_epochs.begin(), config.snapshot_epochs.end(), epoch + 1)) {
      snapshot(snap_dir / snapshot_name(epoch + 1), epoch + 1, step, network_arrays(net));
    }
  }
  if (result.status == RunStatus::completed) {
    result.steps = step;
    snapshot(options.out_dir / "final.snap", config.epochs, step, network_arrays(net));
  }
  if (write) {
    nlohmann::json run = {{"schema_version", kMetricsSchemaVersion},
                          {"columns", columns},
                          {"run_id", config.run_id},
                          {"config_hash", hash},
                          {"test_split", data.test_split},
                          {"status", result.status == RunStatus::completed ? "completed" : "nan_abort"},
                          {"diagnostic", result.diagnostic},
                          {"steps", result.steps},
                          {"final_train_acc", result.final_train_acc},
                          {"final_test_acc", result.final_test_acc},
                          {"best_test_acc", result.best_test_acc}};
    std::ofstream(options.out_dir / "run.json") << run.dump(2) << '\n';
  }
  if (options.keep_network) result.network.emplace(std::move(net));
  return result;
}

}  // namespace wrs

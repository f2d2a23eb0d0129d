// wrs: training, sweeps, plot data and dynamics checks for BN networks.
//
// Exit codes: 0 ok, 1 checks failed or internal error, 2 config/usage error,
// 3 data error, 4 numerical abort.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "wrs/dynamics.hpp"
#include "wrs/harness.hpp"
#include "wrs/plotdata.hpp"
#include "wrs/sweep.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailed = 1;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

int cmd_train(const std::string& config_path, std::optional<std::uint64_t> seed, std::string out) {
  auto config = wrs::load_config(config_path);
  if (seed) config.seed = *seed;
  if (out.empty()) out = "runs/" + config.run_id;
  wrs::RunOptions options;
  options.out_dir = out;
  const auto r = wrs::run_experiment(config, options);
  if (r.status == wrs::RunStatus::nan_abort) {
    std::fprintf(stderr, "numerical abort: %s\nlast good state: %s/last_good.snap\n", r.diagnostic.c_str(),
                 out.c_str());
    return kExitNumeric;
  }
  std::printf("%s: %llu steps, final train acc %.4f, final %s acc %.4f, best %.4f -> %s\n", config.run_id.c_str(),
              static_cast<unsigned long long>(r.steps), r.final_train_acc, r.test_split.c_str(), r.final_test_acc,
              r.best_test_acc, out.c_str());
  return kExitOk;
}

int cmd_sweep(const std::string& spec_path, const std::string& out, std::size_t jobs) {
  const auto spec = wrs::load_sweep_spec(spec_path);
  const auto r = wrs::run_sweep(spec, {.out_dir = out, .jobs = jobs});
  std::size_t failed = 0;
  for (const auto& run : r.runs) failed += !run.ok;
  for (std::size_t c = 0; c < r.cells.size(); ++c) {
    const auto& s = r.cells[c];
    std::string label;
    for (std::size_t a = 0; a < spec.axes.size(); ++a) label += " " + spec.axes[a].path + "=" + s.values[a].dump();
    std::printf("cell %zu%s: test acc %.4f +- %.4f (%zu/%zu ok)%s\n", c, label.c_str(), s.mean_final_test_acc,
                s.std_final_test_acc, s.completed, s.completed + s.failed, c == r.best_cell ? "  best" : "");
  }
  std::printf("%zu runs, %zu failed -> %s/sweep.csv\n", r.runs.size(), failed, out.c_str());
  return kExitOk;
}

int cmd_analyze(const std::vector<std::string>& runs, const std::string& kind, const std::string& out) {
  const auto k = wrs::parse_plot_kind(kind);
  const std::vector<std::filesystem::path> inputs(runs.begin(), runs.end());
  const auto points = wrs::emit_plotdata(inputs, k);
  if (out.empty() || out == "-") {
    wrs::write_plotdata(std::cout, points);
  } else {
    std::ofstream f(out);
    if (!f) throw wrs::ConfigError("cannot write " + out);
    wrs::write_plotdata(f, points);
  }
  return kExitOk;
}

int cmd_verify(std::size_t trials, std::uint64_t seed) {
  bool all = true;
  for (const auto& c : wrs::verify_dynamics(trials, seed)) {
    std::printf("%s %-26s worst %.3e bound %.1e cases %zu%s%s\n", c.passed ? "PASS" : "FAIL", c.name.c_str(), c.worst,
                c.bound, c.cases, c.detail.empty() ? "" : "  ", c.detail.c_str());
    all = all && c.passed;
  }
  return all ? kExitOk : kExitFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weight-norm dynamics of batch-normalized networks: training, sweeps, analysis"};
  app.require_subcommand(1);

  std::string config_path, out_dir, spec_path, kind, analyze_out;
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1, trials = 100;
  std::uint64_t verify_seed = 0;
  std::vector<std::string> runs;

  auto* train = app.add_subcommand("train", "Run one experiment from a JSON config");
  train->add_option("--config", config_path, "Experiment config file")->required()->check(CLI::ExistingFile);
  train->add_option("--seed", seed, "Override the config seed");
  train->add_option("--out", out_dir, "Output directory (default runs/<run_id>)");

  auto* sweep = app.add_subcommand("sweep", "Run a hyperparameter grid with replicas");
  sweep->add_option("--spec", spec_path, "Sweep spec file")->required()->check(CLI::ExistingFile);
  sweep->add_option("--out", out_dir, "Output directory")->required();
  sweep->add_option("--jobs", jobs, "Parallel runs")->check(CLI::PositiveNumber);

  auto* analyze = app.add_subcommand("analyze", "Emit long-format plot data from run or sweep directories");
  analyze->add_option("--run", runs, "Run or sweep directory (repeat for overfit_compare)")
      ->required()
      ->check(CLI::ExistingDirectory);
  analyze->add_option("--kind", kind, "norm_traj | acc_vs_hyper | beta_profile | overfit_compare")->required();
  analyze->add_option("--out", analyze_out, "Output CSV (default stdout)");

  auto* verify = app.add_subcommand("verify-dynamics", "Check the exact norm-dynamics properties on random networks");
  verify->add_option("--trials", trials, "Random networks per property")->check(CLI::PositiveNumber);
  verify->add_option("--seed", verify_seed, "Seed for the random networks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*train) return cmd_train(config_path, seed, out_dir);
    if (*sweep) return cmd_sweep(spec_path, out_dir, jobs);
    if (*analyze) return cmd_analyze(runs, kind, analyze_out);
    if (*verify) return cmd_verify(trials, verify_seed);
  } catch (const wrs::FormatError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kExitData;
  } catch (const wrs::NumericError& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return kExitNumeric;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFailed;
  }
  return kExitFailed;
}

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <set>

#include "doctest.h"
#include "wrs/csv.hpp"
#include "wrs/harness.hpp"
#include "wrs/plotdata.hpp"
#include "wrs/snapshot.hpp"
#include "wrs/sweep.hpp"

using namespace wrs;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "wrs_test_harness" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

json small_config() {
  return {{"run_id", "small"},
          {"architecture", "bn-mlp:8-6-3"},
          {"dataset", {{"kind", "synthetic"}, {"classes", 3}, {"dim", 8}, {"samples", 120}, {"separation", 3.0}}},
          {"optimizer", {{"kind", "sgdm"}}},
          {"regularizer", {{"mode", "wrs"}, {"lambda", 5e-4}, {"tau", 4}}},
          {"batch_size", 20},
          {"epochs", 3},
          {"lr", {{"initial", 0.1}, {"decay_epochs", {2}}, {"factor", 0.1}}},
          {"seed", 5},
          {"metrics_every", 3}};
}

}  // namespace

TEST_CASE("config parsing") {
  const auto c = config_from_json(small_config());
  CHECK(c.batch_size == 20);
  CHECK(c.optimizer.kind == OptimizerKind::sgdm);
  CHECK(c.optimizer.lr == 0.1);
  CHECK(c.regularizer.mode == RegularizerMode::wrs);
  CHECK(c.regularizer.tau == 4);

  // Round trip through the canonical form.
  const auto again = config_from_json(config_to_json(c));
  CHECK(config_hash(again) == config_hash(c));
  CHECK(config_to_json(again) == config_to_json(c));

  // Shorthand and explicit layer lists describe the same network.
  auto j = small_config();
  j["architecture"] = config_to_json(c)["architecture"];
  CHECK(config_hash(config_from_json(j)) == config_hash(c));

  auto seeded = small_config();
  seeded["seed"] = 6;
  CHECK(config_hash(config_from_json(seeded)) != config_hash(c));

  const auto window = config_from_json(json::parse(R"({"run_id":"w","architecture":"bn-mlp:4-3-2",
      "dataset":{"kind":"synthetic","classes":2,"dim":4,"samples":40},
      "regularizer":{"mode":"wd","lambda":0.01,"active_epochs":{"start":0,"end":3}}})"));
  CHECK(window.regularizer.active_window.end == 3);
  CHECK(config_from_json(config_to_json(window)).regularizer.active_window.end == 3);
}

TEST_CASE("config errors") {
  auto expect_error = [](json j) { CHECK_THROWS_AS(config_from_json(j), ConfigError); };
  auto j = small_config();
  j["bogus"] = 1;
  expect_error(j);
  j = small_config();
  j["optimizer"]["nesterov"] = true;
  expect_error(j);
  j = small_config();
  j["dataset"]["colour"] = "red";
  expect_error(j);
  j = small_config();
  j["batch_size"] = 1;
  expect_error(j);
  j = small_config();
  j["architecture"] = "bn-rnn:3-3";
  expect_error(j);
  j = small_config();
  j["optimizer"]["kind"] = "lion";
  expect_error(j);
  j = small_config();
  j["lr"]["factor"] = 2.0;
  expect_error(j);
  j = small_config();
  j["regularizer"]["tau"] = 0;
  expect_error(j);
  j = small_config();
  j["epochs"] = "many";
  expect_error(j);
  j = small_config();
  j["dataset"] = {{"kind", "idx"}, {"images", "/nonexistent/images"}, {"labels", "/nonexistent/labels"}};
  CHECK_THROWS_AS(config_from_json(j), FormatError);  // a data problem, not a config one
  j = small_config();
  j.erase("architecture");
  expect_error(j);

  const auto dir = scratch("badjson");
  std::ofstream(dir / "c.json") << "{ not json";
  CHECK_THROWS_AS(load_config(dir / "c.json"), ConfigError);
}

TEST_CASE("epoch permutations") {
  const auto a = epoch_permutation(100, 7, 0);
  auto sorted = a;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) CHECK(sorted[i] == i);
  CHECK(epoch_permutation(100, 7, 0) == a);
  CHECK(epoch_permutation(100, 7, 1) != a);
  CHECK(epoch_permutation(100, 8, 0) != a);
  CHECK(epoch_permutation(1, 7, 0) == std::vector<std::size_t>{0});
}

TEST_CASE("zero epochs writes only the initial row") {
  auto j = small_config();
  j["epochs"] = 0;
  const auto dir = scratch("zero");
  const auto r = run_experiment(config_from_json(j), {.out_dir = dir});
  CHECK(r.rows.size() == 1);
  CHECK(r.rows[0].kind == "init");
  const auto t = read_csv(dir / "metrics.csv");
  CHECK(t.rows.size() == 1);
  CHECK(t.rows[0][t.column("w0.grad_norm")].empty());
  CHECK(fs::exists(dir / "final.snap"));
}

TEST_CASE("runs are bitwise reproducible") {
  const auto c = config_from_json(small_config());
  const auto a = scratch("repro_a"), b = scratch("repro_b");
  run_experiment(c, {.out_dir = a});
  run_experiment(c, {.out_dir = b});
  CHECK(slurp(a / "metrics.csv") == slurp(b / "metrics.csv"));
  CHECK(slurp(a / "final.snap") == slurp(b / "final.snap"));

  auto other = small_config();
  other["seed"] = 9;
  const auto d = scratch("repro_c");
  run_experiment(config_from_json(other), {.out_dir = d});
  CHECK(slurp(a / "metrics.csv") != slurp(d / "metrics.csv"));
}

TEST_CASE("metrics rows, schedule and rescale flags") {
  const auto c = config_from_json(small_config());
  const auto dir = scratch("rows");
  const auto r = run_experiment(c, {.out_dir = dir});
  // 108 training samples in batches of 20: five full batches and one of 8.
  const std::uint64_t per_epoch = 6;
  CHECK(r.steps == 3 * per_epoch);
  std::size_t steps = 0, ends = 0;
  for (const auto& row : r.rows) {
    steps += row.kind == "step";
    ends += row.kind == "epoch_end";
    if (row.kind == "step") CHECK(row.step % 3 == 0);
  }
  CHECK(steps == r.steps / 3);
  CHECK(ends == 3);

  // lr changes only at the decay epoch, by exactly the factor.
  for (const auto& row : r.rows) CHECK(row.lr == (row.epoch >= 2 ? c.lr.initial * 0.1 : c.lr.initial));

  // tau = 4 and rows every 3 steps: firings at 4, 8, 12, 16.
  for (const auto& row : r.rows) {
    if (row.kind != "step") continue;
    const bool expect = (row.step / 4) != ((row.step - 3) / 4);
    CHECK(row.wrs_fired == expect);
  }

  const auto t = read_csv(dir / "metrics.csv");
  CHECK(t.header == metrics_columns(Network::build(c.architecture, 0), true));
  CHECK(t.rows.size() == r.rows.size());
  const auto meta = load_json_file(dir / "run.json");
  CHECK(meta["schema_version"] == kMetricsSchemaVersion);
  CHECK(meta["test_split"] == "holdout");
  CHECK(t.rows[0][t.column("split")] == "holdout");
  CHECK(parse_double(t.rows.back()[t.column("test_acc")]) == r.final_test_acc);
}

TEST_CASE("untruncated prefix of a metrics file stays readable") {
  const auto dir = scratch("crash");
  run_experiment(config_from_json(small_config()), {.out_dir = dir});
  const auto full = slurp(dir / "metrics.csv");
  const auto whole = read_csv(dir / "metrics.csv");
  // Cut in the middle of the fifth data row.
  std::size_t pos = 0;
  for (int i = 0; i < 5; ++i) pos = full.find('\n', pos) + 1;
  std::ofstream(dir / "cut.csv", std::ios::binary) << full.substr(0, pos + 40);
  const auto cut = read_csv(dir / "cut.csv");
  CHECK(cut.rows.size() == 4);
  for (std::size_t i = 0; i < cut.rows.size(); ++i) CHECK(cut.rows[i] == whole.rows[i]);
}

TEST_CASE("untrained BN-MLP on synthetic data learns and grows its weights") {
  json j = {{"run_id", "mlp"},
            {"architecture", "bn-mlp:32-64-64-10"},
            {"dataset", {{"kind", "synthetic"}, {"classes", 10}, {"dim", 32}, {"samples", 2000}}},
            {"optimizer", {{"kind", "sgd"}}},
            {"regularizer", {{"mode", "none"}}},
            {"batch_size", 50},
            {"epochs", 5},
            {"lr", 0.1},
            {"seed", 3},
            {"metrics_every", 1000}};
  const auto r = run_experiment(config_from_json(j));
  CHECK(r.rows.back().train_acc > 0.9);
  const auto& first = r.rows.front().weights;
  const auto& last = r.rows.back().weights;
  for (std::size_t l = 0; l < first.size(); ++l) {
    if (!first[l].scale_invariant) continue;
    for (std::size_t s = 0; s < first[l].slice_weight_norms.size(); ++s)
      CHECK(last[l].slice_weight_norms[s] >= first[l].slice_weight_norms[s]);
  }
}

TEST_CASE("NaN loss aborts with the last good state") {
  auto j = small_config();
  j["lr"] = 1e200;
  const auto dir = scratch("nan");
  const auto r = run_experiment(config_from_json(j), {.out_dir = dir});
  CHECK(r.status == RunStatus::nan_abort);
  CHECK_FALSE(r.diagnostic.empty());
  CHECK(r.rows.back().kind == "nan_abort");
  const auto snap = load_snapshot(dir / "last_good.snap");
  for (const auto& a : snap.arrays)
    for (double v : a.values) CHECK(std::isfinite(v));
  CHECK_FALSE(fs::exists(dir / "final.snap"));
  CHECK(load_json_file(dir / "run.json")["status"] == "nan_abort");
  CHECK(read_csv(dir / "metrics.csv").rows.back()[1] == "nan_abort");
}

TEST_CASE("snapshots round-trip bit-exactly") {
  auto net = Network::build(ArchitectureSpec::parse("bn-cnn:1x4x4:2:3"), 11);
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (auto& p : net.parameters())
    for (auto& v : p.value.mutable_data()) v = u(rng) * 1e-300 + u(rng);
  net.parameters()[0].value.mutable_data()[0] = -0.0;
  net.parameters()[0].value.mutable_data()[1] = 5e-324;
  for (auto& l : net.layers())
    if (l.bn) l.bn->running_var[0] = 0.1 + u(rng);
  const auto dir = scratch("snap");
  save_snapshot(dir / "a.snap", network_arrays(net), {{"note", "x"}});
  const auto s = load_snapshot(dir / "a.snap");
  CHECK(s.header["note"] == "x");
  CHECK(s.header["version"] == kSnapshotVersion);
  const auto before = network_arrays(net);
  REQUIRE(s.arrays.size() == before.size());
  for (std::size_t i = 0; i < before.size(); ++i) {
    CHECK(s.arrays[i].name == before[i].name);
    CHECK(s.arrays[i].shape == before[i].shape);
    CHECK(std::memcmp(s.arrays[i].values.data(), before[i].values.data(), before[i].values.size() * 8) == 0);
  }
  auto fresh = Network::build(ArchitectureSpec::parse("bn-cnn:1x4x4:2:3"), 99);
  load_network_arrays(fresh, s.arrays);
  save_snapshot(dir / "b.snap", network_arrays(fresh), {{"note", "x"}});
  CHECK(slurp(dir / "a.snap") == slurp(dir / "b.snap"));

  auto other = Network::build(ArchitectureSpec::parse("bn-mlp:16-3-3"), 1);
  CHECK_THROWS_AS(load_network_arrays(other, s.arrays), DimensionError);

  const auto bytes = slurp(dir / "a.snap");
  std::ofstream(dir / "cut.snap", std::ios::binary) << bytes.substr(0, bytes.size() - 5);
  CHECK_THROWS_AS(load_snapshot(dir / "cut.snap"), FormatError);
  std::ofstream(dir / "magic.snap", std::ios::binary) << "X" << bytes.substr(1);
  CHECK_THROWS_AS(load_snapshot(dir / "magic.snap"), FormatError);
}

TEST_CASE("CSV quoting and number formatting") {
  const std::vector<std::string> fields{"plain", "a,b", "say \"hi\"", "two\nlines", ""};
  const auto dir = scratch("csv");
  std::ofstream(dir / "q.csv", std::ios::binary) << csv_line({"c1", "c2", "c3", "c4", "c5"}) << csv_line(fields);
  const auto t = read_csv(dir / "q.csv");
  REQUIRE(t.rows.size() == 1);
  CHECK(t.rows[0] == fields);
  CHECK(csv_escape("a,b") == "\"a,b\"");

  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  for (int i = 0; i < 1000; ++i) {
    const double v = std::exp(u(rng)) * (i % 2 ? -1 : 1);
    CHECK(parse_double(format_double(v)) == v);
  }
  CHECK(format_double(std::nan("")).empty());
  CHECK(std::isnan(parse_double("")));
  CHECK_THROWS_AS(parse_double("1.5x"), FormatError);
  std::ofstream(dir / "ragged.csv", std::ios::binary) << "a,b\n1,2,3\n";
  CHECK_THROWS_AS(read_csv(dir / "ragged.csv"), FormatError);
}

TEST_CASE("sweep grids and aggregation") {
  SweepSpec spec;
  spec.base = small_config();
  spec.base["epochs"] = 1;
  spec.replicas = 3;

  SUBCASE("1x1 grid averages exactly the replicas") {
    const auto dir = scratch("sweep11");
    const auto r = run_sweep(spec, {.out_dir = dir});
    REQUIRE(r.cells.size() == 1);
    CHECK(r.cells[0].completed == 3);
    std::vector<double> acc;
    std::set<std::uint64_t> seeds;
    for (const auto& o : r.runs) {
      acc.push_back(o.final_test_acc);
      seeds.insert(o.seed);
    }
    CHECK(seeds.size() == 3);
    const auto [m, s] = mean_std(acc);
    CHECK(r.cells[0].mean_final_test_acc == m);
    CHECK(r.cells[0].std_final_test_acc == s);
  }

  SUBCASE("lambda axis gives three cells matching their run files") {
    spec.axes = {{"regularizer.lambda", {5e-3, 5e-4, 5e-5}}};
    const auto dir = scratch("sweep_lambda");
    const auto r = run_sweep(spec, {.out_dir = dir, .jobs = 3});
    REQUIRE(r.cells.size() == 3);
    const auto t = read_csv(dir / "sweep.csv");
    REQUIRE(t.rows.size() == 3);
    std::size_t best_rows = 0;
    for (std::size_t c = 0; c < 3; ++c) {
      std::vector<double> acc;
      for (std::size_t rep = 0; rep < 3; ++rep) {
        const auto m = read_csv(dir / "runs" / ("cell" + std::to_string(c) + "_rep" + std::to_string(rep)) /
                                "metrics.csv");
        acc.push_back(parse_double(m.rows.back()[m.column("test_acc")]));
      }
      CHECK(std::abs(mean_std(acc).first - parse_double(t.rows[c][t.column("mean_final_test_acc")])) <= 1e-12);
      best_rows += t.rows[c][t.column("best")] == "1";
    }
    CHECK(best_rows == 1);

    // Parallel and sequential sweeps agree.
    const auto seq = run_sweep(spec);
    for (std::size_t c = 0; c < 3; ++c) CHECK(seq.cells[c].mean_final_test_acc == r.cells[c].mean_final_test_acc);

    const auto plot = emit_plotdata(std::vector<fs::path>{dir}, PlotKind::acc_vs_hyper);
    CHECK(plot.size() == 6);
  }

  SUBCASE("failures are recorded and the sweep continues") {
    spec.axes = {{"regularizer.tau", {0, 5}}};
    const auto r = run_sweep(spec);
    CHECK(r.cells[0].failed == 3);
    CHECK(r.cells[0].errors.size() == 3);
    CHECK(r.cells[1].completed == 3);
    CHECK(r.best_cell == 1);
  }

  SUBCASE("budget") {
    spec.axes = {{"regularizer.lambda", {5e-3, 5e-4, 5e-5}}, {"regularizer.tau", {10, 20, 30, 40, 50}}};
    CHECK(sweep_cells(spec).size() == 15);
    spec.budget = 44;
    CHECK_THROWS_AS(spec.validate(), ConfigError);
    spec.budget = 45;
    CHECK_NOTHROW(spec.validate());
  }

  SUBCASE("spec parsing") {
    json j = {{"base", small_config()}, {"axes", {{{"path", "seed"}, {"values", {1, 2}}}}}, {"replicas", 2}};
    CHECK(sweep_from_json(j).axes.size() == 1);
    j["extra"] = 1;
    CHECK_THROWS_AS(sweep_from_json(j), ConfigError);
  }
}

TEST_CASE("plot data") {
  auto j = small_config();
  j["architecture"] = "bn-mlp:8-4-3";
  const auto a = scratch("plot_a"), b = scratch("plot_b");
  run_experiment(config_from_json(j), {.out_dir = a});
  j["run_id"] = "other";
  j["epochs"] = 2;
  run_experiment(config_from_json(j), {.out_dir = b});

  SUBCASE("norm_traj on a two-weight-layer run") {
    const auto pts = emit_plotdata(std::vector<fs::path>{a}, PlotKind::norm_traj);
    std::set<std::string> series;
    for (const auto& p : pts) series.insert(p.series);
    CHECK(series == std::set<std::string>{"w0.weight_norm", "w0.effective_ratio", "w0.effective_ratio.ema",
                                          "w1.weight_norm", "w1.effective_ratio", "w1.effective_ratio.ema"});
    std::vector<double> raw, smooth;
    for (const auto& p : pts) {
      if (p.series == "w0.effective_ratio") raw.push_back(p.y);
      if (p.series == "w0.effective_ratio.ema") smooth.push_back(p.y);
    }
    CHECK(smooth == ema(raw, 0.6));
  }

  SUBCASE("overfit_compare joins on common epochs") {
    const auto pts = emit_plotdata(std::vector<fs::path>{a, b}, PlotKind::overfit_compare);
    std::set<double> xs;
    std::set<std::string> series;
    for (const auto& p : pts) {
      xs.insert(p.x);
      series.insert(p.series);
    }
    CHECK(xs == std::set<double>{1.0, 2.0});
    CHECK(series.size() == 4);
    CHECK(pts.size() == 8);
    CHECK_THROWS_AS(emit_plotdata(std::vector<fs::path>{a}, PlotKind::overfit_compare), ConfigError);
  }

  SUBCASE("beta_profile reads the final snapshot") {
    j["architecture"] = "bn-mlp:8-16-3";  // the GGD fit needs 100 values per layer
    const auto c = scratch("plot_c");
    run_experiment(config_from_json(j), {.out_dir = c});
    const auto pts = emit_plotdata(std::vector<fs::path>{c}, PlotKind::beta_profile);
    REQUIRE(pts.size() == 2);
    for (const auto& p : pts) CHECK(std::isfinite(p.y));
  }

  CHECK_THROWS_AS(parse_plot_kind("scatter"), ConfigError);
  CHECK(parse_plot_kind("norm_traj") == PlotKind::norm_traj);
}

#include "wrs/sweep.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <set>
#include <thread>

#include "wrs/csv.hpp"

namespace wrs {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void set_path(json& j, const std::string& path, const json& value) {
  json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError("bad axis path '" + path + "'");
    if (!node->is_object()) throw ConfigError("axis path '" + path + "' runs through a non-object");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

std::string value_text(const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

std::string run_dir_name(std::size_t cell, std::size_t replica) {
  return "cell" + std::to_string(cell) + "_rep" + std::to_string(replica);
}

}  // namespace

std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {std::nan(""), std::nan("")};
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  if (v.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

void SweepSpec::validate() const {
  if (replicas == 0) throw ConfigError("sweep needs at least one replica");
  std::set<std::string> seen;
  std::size_t cells = 1;
  for (const auto& a : axes) {
    if (a.values.empty()) throw ConfigError("sweep axis '" + a.path + "' has no values");
    if (!seen.insert(a.path).second) throw ConfigError("sweep axis '" + a.path + "' appears twice");
    cells *= a.values.size();
  }
  if (cells * replicas > budget) {
    throw ConfigError("sweep needs " + std::to_string(cells * replicas) + " runs, budget is " + std::to_string(budget));
  }
}

SweepSpec sweep_from_json(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ConfigError("sweep spec must be an object");
  for (const auto& [key, value] : j.items()) {
    if (key != "base" && key != "axes" && key != "replicas" && key != "budget") {
      throw ConfigError("unknown key '" + key + "' in sweep spec");
    }
  }
  SweepSpec s;
  s.base_dir = base_dir;
  if (!j.contains("base")) throw ConfigError("sweep spec is missing 'base'");
  if (j["base"].is_string()) {
    const fs::path p = base_dir / j["base"].get<std::string>();
    s.base = load_json_file(p);
    s.base_dir = p.parent_path();
  } else {
    s.base = j["base"];
  }
  if (j.contains("axes")) {
    const auto& axes = j["axes"];
    if (!axes.is_array()) throw ConfigError("sweep axes must be a list of {path, values}");
    for (const auto& a : axes) {
      if (!a.is_object() || !a.contains("path") || !a.contains("values") || !a["values"].is_array() || a.size() != 2) {
        throw ConfigError("each sweep axis needs exactly 'path' and a 'values' list");
      }
      s.axes.push_back({a["path"].get<std::string>(), a["values"].get<std::vector<json>>()});
    }
  }
  try {
    if (j.contains("replicas")) s.replicas = j["replicas"].get<std::size_t>();
    if (j.contains("budget")) s.budget = j["budget"].get<std::size_t>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("sweep spec: ") + e.what());
  }
  s.validate();
  // Fail fast on a base that cannot parse at all.
  config_from_json(s.base, s.base_dir);
  return s;
}

SweepSpec load_sweep_spec(const fs::path& path) { return sweep_from_json(load_json_file(path), path.parent_path()); }

std::vector<std::vector<json>> sweep_cells(const SweepSpec& spec) {
  std::vector<std::vector<json>> cells{{}};
  for (const auto& axis : spec.axes) {
    std::vector<std::vector<json>> next;
    for (const auto& prefix : cells) {
      for (const auto& v : axis.values) {
        auto c = prefix;
        c.push_back(v);
        next.push_back(std::move(c));
      }
    }
    cells = std::move(next);
  }
  return cells;
}

json cell_config_json(const SweepSpec& spec, const std::vector<json>& cell, std::size_t replica) {
  json j = spec.base;
  for (std::size_t a = 0; a < spec.axes.size(); ++a) set_path(j, spec.axes[a].path, cell[a]);
  const std::uint64_t seed = j.contains("seed") ? j["seed"].get<std::uint64_t>() : 0;
  j["seed"] = seed + replica;
  std::string id = j.contains("run_id") ? j["run_id"].get<std::string>() : "run";
  for (std::size_t a = 0; a < spec.axes.size(); ++a) id += "_" + spec.axes[a].path + "=" + value_text(cell[a]);
  j["run_id"] = id + "_r" + std::to_string(replica);
  return j;
}

SweepResult run_sweep(const SweepSpec& spec, const SweepOptions& options) {
  spec.validate();
  const auto cells = sweep_cells(spec);
  const std::size_t total = cells.size() * spec.replicas;
  std::vector<RunOutcome> runs(total);
  const bool write = !options.out_dir.empty();
  if (write) fs::create_directories(options.out_dir / "runs");

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < total; k = next++) {
      RunOutcome& o = runs[k];
      o.cell = k / spec.replicas;
      o.replica = k % spec.replicas;
      try {
        const auto config = config_from_json(cell_config_json(spec, cells[o.cell], o.replica), spec.base_dir);
        o.seed = config.seed;
        RunOptions ro;
        if (write) ro.out_dir = options.out_dir / "runs" / run_dir_name(o.cell, o.replica);
        const auto r = run_experiment(config, ro);
        o.final_test_acc = r.final_test_acc;
        o.best_test_acc = r.best_test_acc;
        o.final_train_acc = r.final_train_acc;
        o.ok = r.status == RunStatus::completed;
        o.status = o.ok ? "completed" : "nan_abort";
        o.error = r.diagnostic;
      } catch (const std::exception& e) {
        o.ok = false;
        o.status = "error";
        o.error = e.what();
      }
    }
  };
  const std::size_t jobs = std::max<std::size_t>(1, std::min(options.jobs, total));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  SweepResult result;
  result.runs = runs;
  double best = -1.0;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    CellSummary s;
    s.values = cells[c];
    std::vector<double> fin, top, train;
    for (std::size_t r = 0; r < spec.replicas; ++r) {
      const auto& o = runs[c * spec.replicas + r];
      if (!o.ok) {
        ++s.failed;
        s.errors.push_back("rep" + std::to_string(r) + ": " + o.error);
        continue;
      }
      ++s.completed;
      fin.push_back(o.final_test_acc);
      top.push_back(o.best_test_acc);
      train.push_back(o.final_train_acc);
    }
    std::tie(s.mean_final_test_acc, s.std_final_test_acc) = mean_std(fin);
    std::tie(s.mean_best_test_acc, s.std_best_test_acc) = mean_std(top);
    std::tie(s.mean_final_train_acc, s.std_final_train_acc) = mean_std(train);
    if (s.completed && s.mean_final_test_acc > best) {
      best = s.mean_final_test_acc;
      result.best_cell = c;
    }
    result.cells.push_back(std::move(s));
  }

  if (write) {
    std::ofstream runs_csv(options.out_dir / "runs.csv", std::ios::binary);
    runs_csv << csv_line({"cell", "replica", "seed", "status", "final_test_acc", "best_test_acc", "final_train_acc",
                          "run_dir", "error"});
    for (const auto& o : runs) {
      runs_csv << csv_line({std::to_string(o.cell), std::to_string(o.replica), std::to_string(o.seed), o.status,
                            o.ok ? format_double(o.final_test_acc) : "", o.ok ? format_double(o.best_test_acc) : "",
                            o.ok ? format_double(o.final_train_acc) : "",
                            "runs/" + run_dir_name(o.cell, o.replica), o.error});
    }
    std::vector<std::string> header{"cell"};
    for (const auto& a : spec.axes) header.push_back(a.path);
    for (const char* h : {"replicas", "completed", "failed", "mean_final_test_acc", "std_final_test_acc",
                          "mean_best_test_acc", "std_best_test_acc", "mean_final_train_acc", "std_final_train_acc",
                          "best", "errors"})
      header.push_back(h);
    std::ofstream sweep_csv(options.out_dir / "sweep.csv", std::ios::binary);
    sweep_csv << csv_line(header);
    for (std::size_t c = 0; c < result.cells.size(); ++c) {
      const auto& s = result.cells[c];
      std::vector<std::string> f{std::to_string(c)};
      for (const auto& v : s.values) f.push_back(value_text(v));
      std::string errors;
      for (const auto& e : s.errors) errors += (errors.empty() ? "" : "; ") + e;
      for (const auto& x : {std::to_string(spec.replicas), std::to_string(s.completed), std::to_string(s.failed),
                            format_double(s.mean_final_test_acc), format_double(s.std_final_test_acc),
                            format_double(s.mean_best_test_acc), format_double(s.std_best_test_acc),
                            format_double(s.mean_final_train_acc), format_double(s.std_final_train_acc),
                            std::string(c == result.best_cell && s.completed ? "1" : "0"), errors})
        f.push_back(x);
      sweep_csv << csv_line(f);
    }
    nlohmann::json meta = {{"cells", cells.size()}, {"replicas", spec.replicas}, {"axes", json::array()}};
    for (const auto& a : spec.axes) meta["axes"].push_back({{"path", a.path}, {"values", a.values}});
    std::ofstream(options.out_dir / "sweep.json") << meta.dump(2) << '\n';
  }
  return result;
}

}  // namespace wrs

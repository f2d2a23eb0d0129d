#include "wrs/plotdata.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "wrs/analysis.hpp"
#include "wrs/config.hpp"
#include "wrs/csv.hpp"
#include "wrs/harness.hpp"
#include "wrs/snapshot.hpp"

namespace wrs {

namespace fs = std::filesystem;

namespace {

CsvTable read_metrics(const fs::path& run) {
  const auto meta = load_json_file(run / "run.json");
  if (meta.value("schema_version", 0) != kMetricsSchemaVersion) {
    throw FormatError(run.string() + ": metrics schema " + std::to_string(meta.value("schema_version", 0)) +
                      " is not " + std::to_string(kMetricsSchemaVersion));
  }
  return read_csv(run / "metrics.csv");
}

std::vector<std::string> weight_layers(const CsvTable& t) {
  std::vector<std::string> out;
  for (std::size_t k = 0; t.has_column("w" + std::to_string(k) + ".weight_norm"); ++k) out.push_back("w" + std::to_string(k));
  return out;
}

void norm_traj(const fs::path& run, std::vector<PlotPoint>& out) {
  const auto t = read_metrics(run);
  const auto kind = t.column("kind"), step = t.column("step");
  for (const auto& w : weight_layers(t)) {
    const auto wn = t.column(w + ".weight_norm"), er = t.column(w + ".effective_ratio");
    std::vector<double> xs, ratios;
    for (const auto& row : t.rows) {
      if (row[kind] != "init" && row[kind] != "step") continue;
      const double x = parse_double(row[step]);
      out.push_back({w + ".weight_norm", x, parse_double(row[wn])});
      if (row[kind] == "step") {
        xs.push_back(x);
        ratios.push_back(parse_double(row[er]));
      }
    }
    for (std::size_t i = 0; i < xs.size(); ++i) out.push_back({w + ".effective_ratio", xs[i], ratios[i]});
    const auto smooth = ema(ratios, kPlotEmaAlpha);
    for (std::size_t i = 0; i < xs.size(); ++i) out.push_back({w + ".effective_ratio.ema", xs[i], smooth[i]});
  }
}

bool numeric(const std::string& text) {
  try {
    return !text.empty() && std::isfinite(parse_double(text));
  } catch (const FormatError&) {
    return false;
  }
}

void acc_vs_hyper(const fs::path& sweep, std::vector<PlotPoint>& out) {
  const auto meta = load_json_file(sweep / "sweep.json");
  std::vector<std::string> axes;
  for (const auto& a : meta.at("axes")) axes.push_back(a.at("path").get<std::string>());
  const auto t = read_csv(sweep / "sweep.csv");
  // x is the first axis whose values are all numbers; the others label series.
  std::size_t xa = axes.size();
  for (std::size_t a = 0; a < axes.size() && xa == axes.size(); ++a) {
    const auto col = t.column(axes[a]);
    if (std::all_of(t.rows.begin(), t.rows.end(), [&](const auto& row) { return numeric(row[col]); })) xa = a;
  }
  if (xa == axes.size()) throw ConfigError("acc_vs_hyper needs a sweep with a numeric axis");
  const auto x = t.column(axes[xa]);
  const auto mean = t.column("mean_final_test_acc"), sd = t.column("std_final_test_acc");
  for (const auto& row : t.rows) {
    std::string series;
    for (std::size_t a = 0; a < axes.size(); ++a) {
      if (a != xa) series += (series.empty() ? "" : ",") + axes[a] + "=" + row[t.column(axes[a])];
    }
    if (series.empty()) series = axes[xa];
    out.push_back({series, parse_double(row[x]), parse_double(row[mean])});
    out.push_back({series + ".std", parse_double(row[x]), parse_double(row[sd])});
  }
}

void beta_profile(const fs::path& run, std::vector<PlotPoint>& out) {
  const auto config = config_from_json(load_json_file(run / "config.json"));
  auto net = Network::build(config.architecture, config.seed, config.batchnorm);
  load_network_arrays(net, load_snapshot(run / "final.snap").arrays);
  const auto data = load_experiment_data(config);
  for (const auto& r : sparsity_profile(net, data.train)) {
    out.push_back({"beta_param", static_cast<double>(r.ordinal), r.param_fit.beta});
    out.push_back({"beta_isp", static_cast<double>(r.ordinal), r.isp_fit.beta});
  }
}

void overfit_compare(std::span<const fs::path> runs, std::vector<PlotPoint>& out) {
  if (runs.size() < 2) throw ConfigError("overfit_compare needs at least two runs");
  struct Curve {
    std::string id;
    std::map<double, std::pair<double, double>> by_epoch;  // test, train
  };
  std::vector<Curve> curves;
  std::set<std::string> ids;
  for (const auto& run : runs) {
    const auto t = read_metrics(run);
    Curve c;
    c.id = t.rows.empty() ? run.filename().string() : t.rows[0][t.column("run_id")];
    if (!ids.insert(c.id).second) c.id = run.filename().string();
    ids.insert(c.id);
    const auto kind = t.column("kind"), epoch = t.column("epoch");
    const auto te = t.column("test_acc"), tr = t.column("train_acc");
    for (const auto& row : t.rows) {
      if (row[kind] != "epoch_end") continue;
      c.by_epoch[parse_double(row[epoch]) + 1.0] = {parse_double(row[te]), parse_double(row[tr])};
    }
    curves.push_back(std::move(c));
  }
  std::vector<double> grid;
  for (const auto& [x, v] : curves[0].by_epoch) {
    if (std::all_of(curves.begin(), curves.end(), [&](const Curve& c) { return c.by_epoch.count(x); })) grid.push_back(x);
  }
  for (const auto& c : curves) {
    for (double x : grid) {
      out.push_back({c.id + ".test_acc", x, c.by_epoch.at(x).first});
      out.push_back({c.id + ".train_acc", x, c.by_epoch.at(x).second});
    }
  }
}

}  // namespace

PlotKind parse_plot_kind(std::string_view name) {
  if (name == "norm_traj") return PlotKind::norm_traj;
  if (name == "acc_vs_hyper") return PlotKind::acc_vs_hyper;
  if (name == "beta_profile") return PlotKind::beta_profile;
  if (name == "overfit_compare") return PlotKind::overfit_compare;
  throw ConfigError("unknown plot kind '" + std::string(name) +
                    "' (expected norm_traj, acc_vs_hyper, beta_profile or overfit_compare)");
}

std::string_view to_string(PlotKind kind) {
  switch (kind) {
    case PlotKind::norm_traj: return "norm_traj";
    case PlotKind::acc_vs_hyper: return "acc_vs_hyper";
    case PlotKind::beta_profile: return "beta_profile";
    case PlotKind::overfit_compare: return "overfit_compare";
  }
  return "?";
}

std::vector<PlotPoint> emit_plotdata(std::span<const fs::path> inputs, PlotKind kind) {
  if (inputs.empty()) throw ConfigError("no input directory given");
  if (kind != PlotKind::overfit_compare && inputs.size() != 1) {
    throw ConfigError(std::string(to_string(kind)) + " takes exactly one input directory");
  }
  std::vector<PlotPoint> out;
  switch (kind) {
    case PlotKind::norm_traj: norm_traj(inputs[0], out); break;
    case PlotKind::acc_vs_hyper: acc_vs_hyper(inputs[0], out); break;
    case PlotKind::beta_profile: beta_profile(inputs[0], out); break;
    case PlotKind::overfit_compare: overfit_compare(inputs, out); break;
  }
  return out;
}

void write_plotdata(std::ostream& out, const std::vector<PlotPoint>& points) {
  out << csv_line({"series", "x", "y"});
  for (const auto& p : points) out << csv_line({p.series, format_double(p.x), format_double(p.y)});
}

}  // namespace wrs

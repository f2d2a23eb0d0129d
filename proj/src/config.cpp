#include "wrs/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>

namespace wrs {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : obj.items()) {
    if (!ok.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <class T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

std::string require_string(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) throw ConfigError(where + " is missing '" + key + "'");
  std::string s;
  read(obj, key, s, where);
  return s;
}

fs::path resolve(const fs::path& p, const fs::path& base) {
  if (p.empty()) return p;
  return fs::absolute(base / p).lexically_normal();
}

LayerSpec layer_from_json(const json& j, std::size_t index) {
  const std::string where = "architecture.layers[" + std::to_string(index) + "]";
  check_keys(j, {"kind", "units", "kernel", "stride", "padding", "window"}, where);
  LayerSpec s;
  try {
    s.kind = parse_layer_kind(require_string(j, "kind", where));
  } catch (const ValidationError& e) {
    throw ConfigError(where + ": " + e.what());
  }
  read(j, "units", s.units, where);
  read(j, "kernel", s.kernel, where);
  read(j, "stride", s.stride, where);
  read(j, "padding", s.padding, where);
  read(j, "window", s.window, where);
  return s;
}

ArchitectureSpec architecture_from_json(const json& j) {
  try {
    if (j.is_string()) return ArchitectureSpec::parse(j.get<std::string>());
  } catch (const ValidationError& e) {
    throw ConfigError(std::string("architecture: ") + e.what());
  }
  check_keys(j, {"input", "layers"}, "architecture");
  ArchitectureSpec a;
  read(j, "input", a.input, "architecture");
  if (!j.contains("layers") || !j["layers"].is_array()) throw ConfigError("architecture.layers must be a list");
  for (std::size_t i = 0; i < j["layers"].size(); ++i) a.layers.push_back(layer_from_json(j["layers"][i], i));
  return a;
}

json architecture_to_json(const ArchitectureSpec& a) {
  json layers = json::array();
  for (const auto& l : a.layers) {
    layers.push_back({{"kind", std::string(to_string(l.kind))},
                      {"units", l.units},
                      {"kernel", l.kernel},
                      {"stride", l.stride},
                      {"padding", l.padding},
                      {"window", l.window}});
  }
  return {{"input", a.input}, {"layers", layers}};
}

DatasetConfig dataset_from_json(const json& j, const fs::path& base) {
  DatasetConfig d;
  const std::string kind = require_string(j, "kind", "dataset");
  if (kind == "synthetic") {
    check_keys(j, {"kind", "classes", "dim", "samples", "seed", "separation", "image_shape", "holdout_fraction"},
               "dataset");
    d.kind = DatasetConfig::Kind::synthetic;
    read(j, "classes", d.synthetic.classes, "dataset");
    read(j, "dim", d.synthetic.dim, "dataset");
    read(j, "samples", d.synthetic.samples, "dataset");
    read(j, "separation", d.synthetic.separation, "dataset");
    read(j, "image_shape", d.synthetic.image_shape, "dataset");
    if (j.contains("seed")) {
      read(j, "seed", d.synthetic.seed, "dataset");
      d.synthetic_seed_fixed = true;
    }
  } else if (kind == "idx") {
    check_keys(j, {"kind", "images", "labels", "test_images", "test_labels", "holdout_fraction"}, "dataset");
    d.kind = DatasetConfig::Kind::idx;
    d.images = resolve(require_string(j, "images", "dataset"), base);
    d.labels = resolve(require_string(j, "labels", "dataset"), base);
    std::string ti, tl;
    read(j, "test_images", ti, "dataset");
    read(j, "test_labels", tl, "dataset");
    d.test_images = resolve(ti, base);
    d.test_labels = resolve(tl, base);
  } else {
    throw ConfigError("dataset.kind must be 'synthetic' or 'idx', got '" + kind + "'");
  }
  read(j, "holdout_fraction", d.holdout_fraction, "dataset");
  return d;
}

json dataset_to_json(const DatasetConfig& d) {
  json j;
  if (d.kind == DatasetConfig::Kind::synthetic) {
    j = {{"kind", "synthetic"},
         {"classes", d.synthetic.classes},
         {"dim", d.synthetic.dim},
         {"samples", d.synthetic.samples},
         {"separation", d.synthetic.separation},
         {"image_shape", d.synthetic.image_shape}};
    if (d.synthetic_seed_fixed) j["seed"] = d.synthetic.seed;
  } else {
    j = {{"kind", "idx"}, {"images", d.images.string()}, {"labels", d.labels.string()}};
    if (!d.test_images.empty()) j["test_images"] = d.test_images.string();
    if (!d.test_labels.empty()) j["test_labels"] = d.test_labels.string();
  }
  j["holdout_fraction"] = d.holdout_fraction;
  return j;
}

OptimizerConfig optimizer_from_json(const json& j) {
  check_keys(j, {"kind", "momentum", "beta1", "beta2", "epsilon", "decay_inside_momentum"}, "optimizer");
  OptimizerConfig o;
  try {
    o.kind = parse_optimizer_kind(require_string(j, "kind", "optimizer"));
  } catch (const ValidationError& e) {
    throw ConfigError(std::string("optimizer: ") + e.what());
  }
  if (j.contains("momentum") && j.contains("beta1")) throw ConfigError("optimizer: give momentum or beta1, not both");
  read(j, "momentum", o.momentum, "optimizer");
  read(j, "beta1", o.momentum, "optimizer");
  read(j, "beta2", o.beta2, "optimizer");
  read(j, "epsilon", o.epsilon, "optimizer");
  read(j, "decay_inside_momentum", o.decay_inside_momentum, "optimizer");
  return o;
}

json optimizer_to_json(const OptimizerConfig& o) {
  return {{"kind", std::string(to_string(o.kind))},
          {"momentum", o.momentum},
          {"beta2", o.beta2},
          {"epsilon", o.epsilon},
          {"decay_inside_momentum", o.decay_inside_momentum}};
}

RegularizerConfig regularizer_from_json(const json& j) {
  check_keys(j,
             {"mode", "lambda", "tau", "normalize_output_layer", "classification", "active_epochs",
              "rescale_optimizer_buffers"},
             "regularizer");
  RegularizerConfig r;
  try {
    r.mode = parse_regularizer_mode(require_string(j, "mode", "regularizer"));
  } catch (const ValidationError& e) {
    throw ConfigError(std::string("regularizer: ") + e.what());
  }
  read(j, "lambda", r.lambda, "regularizer");
  read(j, "tau", r.tau, "regularizer");
  read(j, "normalize_output_layer", r.normalize_output_layer, "regularizer");
  read(j, "classification", r.classification, "regularizer");
  read(j, "rescale_optimizer_buffers", r.rescale_optimizer_buffers, "regularizer");
  if (j.contains("active_epochs")) {
    const auto& w = j["active_epochs"];
    check_keys(w, {"start", "end"}, "regularizer.active_epochs");
    read(w, "start", r.active_window.start, "regularizer.active_epochs");
    if (w.contains("end") && !w["end"].is_null()) read(w, "end", r.active_window.end, "regularizer.active_epochs");
  }
  return r;
}

json regularizer_to_json(const RegularizerConfig& r) {
  json window = {{"start", r.active_window.start}, {"end", nullptr}};
  if (r.active_window.end != EpochWindow{}.end) window["end"] = r.active_window.end;
  return {{"mode", std::string(to_string(r.mode))},
          {"lambda", r.lambda},
          {"tau", r.tau},
          {"normalize_output_layer", r.normalize_output_layer},
          {"classification", r.classification},
          {"active_epochs", window},
          {"rescale_optimizer_buffers", r.rescale_optimizer_buffers}};
}

void require_file(const fs::path& p, const char* what) {
  if (!fs::is_regular_file(p)) throw FormatError(std::string("dataset.") + what + " does not exist: " + p.string());
}

}  // namespace

ExperimentConfig config_from_json(const json& j, const fs::path& base_dir) {
  check_keys(j,
             {"run_id", "architecture", "batchnorm", "dataset", "optimizer", "regularizer", "batch_size", "epochs", "lr",
              "seed", "metrics_every", "snapshot_epochs", "slice_metrics"},
             "config");
  ExperimentConfig c;
  read(j, "run_id", c.run_id, "config");
  if (!j.contains("architecture")) throw ConfigError("config is missing 'architecture'");
  c.architecture = architecture_from_json(j["architecture"]);
  if (j.contains("batchnorm")) {
    check_keys(j["batchnorm"], {"momentum", "epsilon"}, "batchnorm");
    read(j["batchnorm"], "momentum", c.batchnorm.momentum, "batchnorm");
    read(j["batchnorm"], "epsilon", c.batchnorm.epsilon, "batchnorm");
  }
  if (!j.contains("dataset")) throw ConfigError("config is missing 'dataset'");
  c.dataset = dataset_from_json(j["dataset"], base_dir);
  if (j.contains("optimizer")) c.optimizer = optimizer_from_json(j["optimizer"]);
  if (j.contains("regularizer")) c.regularizer = regularizer_from_json(j["regularizer"]);
  read(j, "batch_size", c.batch_size, "config");
  read(j, "epochs", c.epochs, "config");
  if (j.contains("lr")) {
    const auto& l = j["lr"];
    if (l.is_number()) {
      c.lr.initial = l.get<double>();
      c.lr.decay_epochs.clear();
    } else {
      check_keys(l, {"initial", "decay_epochs", "factor"}, "lr");
      read(l, "initial", c.lr.initial, "lr");
      read(l, "decay_epochs", c.lr.decay_epochs, "lr");
      read(l, "factor", c.lr.decay_factor, "lr");
    }
  }
  c.optimizer.lr = c.lr.initial;
  read(j, "seed", c.seed, "config");
  read(j, "metrics_every", c.metrics_every, "config");
  read(j, "snapshot_epochs", c.snapshot_epochs, "config");
  read(j, "slice_metrics", c.slice_metrics, "config");
  c.validate();
  return c;
}

json config_to_json(const ExperimentConfig& c) {
  return {{"run_id", c.run_id},
          {"architecture", architecture_to_json(c.architecture)},
          {"batchnorm", {{"momentum", c.batchnorm.momentum}, {"epsilon", c.batchnorm.epsilon}}},
          {"dataset", dataset_to_json(c.dataset)},
          {"optimizer", optimizer_to_json(c.optimizer)},
          {"regularizer", regularizer_to_json(c.regularizer)},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"lr", {{"initial", c.lr.initial}, {"decay_epochs", c.lr.decay_epochs}, {"factor", c.lr.decay_factor}}},
          {"seed", c.seed},
          {"metrics_every", c.metrics_every},
          {"snapshot_epochs", c.snapshot_epochs},
          {"slice_metrics", c.slice_metrics}};
}

void ExperimentConfig::validate() const {
  if (run_id.empty()) throw ConfigError("run_id must not be empty");
  if (batch_size < 2) throw ConfigError("batch_size must be at least 2 for train-mode batch norm");
  if (metrics_every == 0) throw ConfigError("metrics_every must be positive");
  if (architecture.layers.empty()) throw ConfigError("architecture has no layers");
  if (!(batchnorm.epsilon > 0.0)) throw ConfigError("batchnorm.epsilon must be positive");
  if (!(batchnorm.momentum > 0.0 && batchnorm.momentum <= 1.0)) throw ConfigError("batchnorm.momentum must lie in (0,1]");
  if (!(dataset.holdout_fraction > 0.0 && dataset.holdout_fraction < 1.0)) {
    throw ConfigError("dataset.holdout_fraction must lie in (0,1)");
  }
  if (dataset.kind == DatasetConfig::Kind::idx) {
    require_file(dataset.images, "images");
    require_file(dataset.labels, "labels");
    if (dataset.test_images.empty() != dataset.test_labels.empty()) {
      throw ConfigError("dataset.test_images and dataset.test_labels must be given together");
    }
    if (!dataset.test_images.empty()) {
      require_file(dataset.test_images, "test_images");
      require_file(dataset.test_labels, "test_labels");
    }
  }
  try {
    Network::build(architecture, 0, batchnorm);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("architecture: ") + e.what());
  }
  try {
    optimizer.validate();
    regularizer.validate();
    lr.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }
}

json load_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

ExperimentConfig load_config(const fs::path& path) {
  return config_from_json(load_json_file(path), path.parent_path());
}

std::string config_hash(const ExperimentConfig& config) {
  const std::string text = config_to_json(config).dump();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

LoadedData load_experiment_data(const ExperimentConfig& config) {
  const auto& d = config.dataset;
  LoadedData out;
  const std::uint64_t split_seed = config.seed ^ 0x9e3779b97f4a7c15ull;
  if (d.kind == DatasetConfig::Kind::synthetic) {
    auto spec = d.synthetic;
    if (!d.synthetic_seed_fixed) spec.seed = config.seed;
    try {
      auto [train, test] = split_holdout(make_synthetic(spec), d.holdout_fraction, split_seed);
      out.train = std::move(train);
      out.test = std::move(test);
    } catch (const ValidationError& e) {
      throw ConfigError(std::string("dataset: ") + e.what());
    }
    out.test_split = "holdout";
  } else if (d.test_images.empty()) {
    auto [train, test] = split_holdout(load_idx_dataset(d.images, d.labels), d.holdout_fraction, split_seed);
    out.train = std::move(train);
    out.test = std::move(test);
    out.test_split = "holdout";
  } else {
    out.train = load_idx_dataset(d.images, d.labels);
    out.test = load_idx_dataset(d.test_images, d.test_labels);
    out.test_split = "test";
    out.test.classes = out.train.classes = std::max(out.train.classes, out.test.classes);
  }
  const Shape& input = config.architecture.input;
  for (Dataset* ds : {&out.train, &out.test}) {
    if (ds->sample_shape == input) continue;
    if (ds->sample_size() != shape_numel(input)) {
      throw ConfigError("architecture input " + shape_to_string(input) + " does not match samples of shape " +
                        shape_to_string(ds->sample_shape));
    }
    *ds = ds->reshaped(input);
  }
  return out;
}

}  // namespace wrs

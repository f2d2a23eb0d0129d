#include "wrs/layers.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <random>

namespace wrs {

namespace {

constexpr std::pair<LayerKind, std::string_view> kKindNames[] = {
    {LayerKind::dense, "dense"},       {LayerKind::conv2d, "conv2d"},   {LayerKind::batchnorm, "batchnorm"},
    {LayerKind::relu, "relu"},         {LayerKind::maxpool, "maxpool"}, {LayerKind::flatten, "flatten"},
    {LayerKind::ws_dense, "ws_dense"}, {LayerKind::ws_conv2d, "ws_conv2d"},
};

std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(sep, start);
    parts.push_back(text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

std::vector<std::size_t> parse_extents(std::string_view text, char sep, std::string_view context) {
  std::vector<std::size_t> out;
  for (auto part : split(text, sep)) {
    std::size_t v = 0;
    const auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
    if (ec != std::errc() || ptr != part.data() + part.size() || v == 0) {
      throw ValidationError("architecture '" + std::string(context) + "': bad extent '" + std::string(part) + "'");
    }
    out.push_back(v);
  }
  return out;
}

std::string layer_label(std::size_t i, const LayerSpec& s) {
  return "layer " + std::to_string(i) + " (" + std::string(to_string(s.kind)) + ")";
}

Tensor linear_forward(const LayerNode& node, const Tensor& input) {
  const Tensor w = node.spec.kind == LayerKind::ws_dense || node.spec.kind == LayerKind::ws_conv2d
                       ? weight_standardize(*node.weight)
                       : *node.weight;
  if (node.is_conv()) return conv2d(input, w, node.spec.stride, node.spec.padding);
  return matmul(input.rank() == 2 ? input : flatten(input), w);
}

}  // namespace

std::string_view to_string(LayerKind kind) {
  for (const auto& [k, name] : kKindNames)
    if (k == kind) return name;
  return "unknown";
}

LayerKind parse_layer_kind(std::string_view name) {
  for (const auto& [k, n] : kKindNames)
    if (n == name) return k;
  throw ValidationError("unknown layer type '" + std::string(name) + "'");
}

std::string_view to_string(ParamRole role) {
  switch (role) {
    case ParamRole::hidden_weight: return "hidden_weight";
    case ParamRole::output_weight: return "output_weight";
    case ParamRole::bn_gamma: return "bn_gamma";
    case ParamRole::bn_beta: return "bn_beta";
  }
  return "unknown";
}

ArchitectureSpec ArchitectureSpec::bn_mlp(const std::vector<std::size_t>& widths) {
  if (widths.size() < 2) throw ValidationError("bn-mlp needs at least input and output widths");
  ArchitectureSpec spec;
  spec.input = {widths.front()};
  for (std::size_t i = 1; i + 1 < widths.size(); ++i) {
    spec.layers.push_back({.kind = LayerKind::dense, .units = widths[i]});
    spec.layers.push_back({.kind = LayerKind::batchnorm});
    spec.layers.push_back({.kind = LayerKind::relu});
  }
  spec.layers.push_back({.kind = LayerKind::dense, .units = widths.back()});
  return spec;
}

ArchitectureSpec ArchitectureSpec::bn_cnn(const Shape& input, const std::vector<std::size_t>& channels,
                                          std::size_t classes) {
  ArchitectureSpec spec;
  spec.input = input;
  for (auto c : channels) {
    spec.layers.push_back({.kind = LayerKind::conv2d, .units = c, .kernel = 3, .stride = 1, .padding = 1});
    spec.layers.push_back({.kind = LayerKind::batchnorm});
    spec.layers.push_back({.kind = LayerKind::relu});
    spec.layers.push_back({.kind = LayerKind::maxpool, .window = 2});
  }
  spec.layers.push_back({.kind = LayerKind::flatten});
  spec.layers.push_back({.kind = LayerKind::dense, .units = classes});
  return spec;
}

ArchitectureSpec ArchitectureSpec::parse(std::string_view text) {
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) throw ValidationError("architecture '" + std::string(text) + "' has no family prefix");
  const auto family = text.substr(0, colon);
  const auto rest = text.substr(colon + 1);
  if (family == "bn-mlp") return bn_mlp(parse_extents(rest, '-', text));
  if (family == "bn-cnn") {
    const auto parts = split(rest, ':');
    if (parts.size() != 3) throw ValidationError("bn-cnn expects 'bn-cnn:CxHxW:c1-c2-...:classes', got '" + std::string(text) + "'");
    const auto input = parse_extents(parts[0], 'x', text);
    if (input.size() != 3) throw ValidationError("bn-cnn input must be CxHxW in '" + std::string(text) + "'");
    const auto classes = parse_extents(parts[2], '-', text);
    if (classes.size() != 1) throw ValidationError("bn-cnn needs one class count in '" + std::string(text) + "'");
    return bn_cnn(input, parse_extents(parts[1], '-', text), classes[0]);
  }
  throw ValidationError("unknown architecture family '" + std::string(family) + "'");
}

BatchNormState BatchNormState::identity(std::size_t channels, const BatchNormConfig& config) {
  BatchNormState s;
  s.gamma = Tensor::full({channels}, 1.0, true);
  s.beta = Tensor::zeros({channels}, true);
  s.running_mean.assign(channels, 0.0);
  s.running_var.assign(channels, 1.0);
  s.momentum = config.momentum;
  s.epsilon = config.epsilon;
  return s;
}

Tensor batchnorm_forward(const Tensor& pre_activation, BatchNormState& state, Mode mode) {
  if (!(state.epsilon > 0.0)) throw ValidationError("batch norm epsilon must be positive");
  if (mode == Mode::eval) {
    for (double v : state.running_var) {
      if (!(v >= 0.0)) throw CorruptionError("batch norm running variance is negative or NaN");
    }
    return batch_norm_eval(pre_activation, state.gamma, state.beta, state.running_mean, state.running_var,
                           state.epsilon);
  }
  if (pre_activation.rank() < 2) {
    throw DimensionError("batch norm expects a batch axis, got " + shape_to_string(pre_activation.shape()));
  }
  const std::size_t per_channel = pre_activation.numel() / pre_activation.dim(1);
  if (per_channel < 2) {
    throw BatchSizeError("train-mode batch norm needs at least 2 values per channel, got " +
                         std::to_string(per_channel));
  }
  BatchMoments moments;
  Tensor out = batch_norm_train(pre_activation, state.gamma, state.beta, state.epsilon, &moments);
  const double m = state.momentum;
  for (std::size_t c = 0; c < state.channels(); ++c) {
    state.running_mean[c] = (1.0 - m) * state.running_mean[c] + m * moments.mean[c];
    state.running_var[c] = (1.0 - m) * state.running_var[c] + m * moments.var[c];
  }
  return out;
}

Tensor bn_layer_forward(const Tensor& h, const Tensor& weight, BatchNormState& state, Mode mode,
                        const LinearSettings& linear) {
  const Tensor w = linear.standardize ? weight_standardize(weight) : weight;
  Tensor z = weight.rank() == 4 ? conv2d(h, w, linear.stride, linear.padding) : matmul(h, w);
  return relu(batchnorm_forward(z, state, mode));
}

Network Network::build(const ArchitectureSpec& spec, std::uint64_t seed, const BatchNormConfig& bn) {
  if (spec.input.empty()) throw ValidationError("architecture has no input shape");
  if (spec.layers.empty()) throw ValidationError("architecture has no layers");
  Network net;
  net.spec_ = spec;
  std::mt19937_64 rng(seed);

  Shape shape = spec.input;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& ls = spec.layers[i];
    LayerNode node;
    node.spec = ls;
    const std::string where = layer_label(i, ls);
    switch (ls.kind) {
      case LayerKind::dense:
      case LayerKind::ws_dense: {
        if (ls.units == 0) throw ValidationError(where + ": units must be positive");
        const std::size_t fan_in = shape_numel(shape);
        node.weight = Tensor::zeros({fan_in, ls.units}, true);
        shape = {ls.units};
        break;
      }
      case LayerKind::conv2d:
      case LayerKind::ws_conv2d: {
        if (shape.size() != 3) {
          throw ValidationError(where + ": expects a CxHxW input, previous output is " + shape_to_string(shape));
        }
        if (ls.units == 0) throw ValidationError(where + ": channels must be positive");
        const Shape kernel{ls.kernel, ls.kernel, shape[0], ls.units};
        Conv2dGeometry g;
        try {
          g = conv2d_geometry({1, shape[0], shape[1], shape[2]}, kernel, ls.stride, ls.padding);
        } catch (const std::exception& e) {
          throw ValidationError(where + ": " + e.what());
        }
        node.weight = Tensor::zeros(kernel, true);
        shape = {ls.units, g.out_height, g.out_width};
        break;
      }
      case LayerKind::batchnorm: {
        node.bn = BatchNormState::identity(shape[0], bn);
        break;
      }
      case LayerKind::relu: break;
      case LayerKind::maxpool: {
        if (shape.size() != 3 || ls.window == 0 || shape[1] < ls.window || shape[2] < ls.window) {
          throw ValidationError(where + ": window " + std::to_string(ls.window) + " does not fit " + shape_to_string(shape));
        }
        shape = {shape[0], shape[1] / ls.window, shape[2] / ls.window};
        break;
      }
      case LayerKind::flatten: shape = {shape_numel(shape)}; break;
    }
    if (node.weight) {
      const auto& ws = node.weight->shape();
      const std::size_t fan_in = shape_numel(ws) / ws.back();
      const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (auto& v : node.weight->mutable_data()) v = dist(rng);
    }
    node.output_shape = shape;
    net.layers_.push_back(std::move(node));
  }

  for (std::size_t i = 0; i < net.layers_.size(); ++i) {
    auto& node = net.layers_[i];
    if (node.has_weight()) {
      node.scale_invariant = i + 1 < net.layers_.size() && net.layers_[i + 1].spec.kind == LayerKind::batchnorm;
    }
  }
  auto& last = net.layers_.back();
  if (last.spec.kind != LayerKind::dense) {
    throw ValidationError(layer_label(net.layers_.size() - 1, last.spec) + ": the final layer must be the dense output layer");
  }
  last.is_output = true;
  net.output_layer_ = net.layers_.size() - 1;
  net.collect_parameters();
  return net;
}

void Network::collect_parameters() {
  params_.clear();
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    auto& node = layers_[i];
    const std::string prefix = "layer" + std::to_string(i);
    if (node.weight) {
      params_.push_back({prefix + ".weight", *node.weight,
                         node.is_output ? ParamRole::output_weight : ParamRole::hidden_weight, node.scale_invariant, i});
    }
    if (node.bn) {
      params_.push_back({prefix + ".gamma", node.bn->gamma, ParamRole::bn_gamma, false, i});
      params_.push_back({prefix + ".beta", node.bn->beta, ParamRole::bn_beta, false, i});
    }
  }
}

Network Network::clone() const {
  Network copy;
  copy.spec_ = spec_;
  copy.output_layer_ = output_layer_;
  copy.layers_ = layers_;
  for (auto& node : copy.layers_) {
    if (node.weight) node.weight = node.weight->clone();
    if (node.bn) {
      node.bn->gamma = node.bn->gamma.clone();
      node.bn->beta = node.bn->beta.clone();
    }
  }
  copy.collect_parameters();
  return copy;
}

std::size_t Network::classes() const { return layers_[output_layer_].spec.units; }

const Parameter& Network::parameter(std::string_view name) const {
  for (const auto& p : params_)
    if (p.name == name) return p;
  throw ValidationError("no parameter named '" + std::string(name) + "'");
}

std::vector<std::size_t> Network::weight_layers() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < layers_.size(); ++i)
    if (layers_[i].has_weight()) out.push_back(i);
  return out;
}

std::vector<std::size_t> Network::hidden_weight_layers() const {
  auto out = weight_layers();
  std::erase(out, output_layer_);
  return out;
}

void Network::zero_grad() {
  for (auto& p : params_) p.value.clear_grad();
}

void Network::set_batchnorm_epsilon(double epsilon) {
  for (auto& node : layers_)
    if (node.bn) node.bn->epsilon = epsilon;
}

Tensor Network::forward(const Tensor& batch, Mode mode) { return forward_trace(batch, mode).logits; }

ForwardTrace Network::forward_trace(const Tensor& batch, Mode mode) {
  Shape expected{0};
  expected.insert(expected.end(), spec_.input.begin(), spec_.input.end());
  if (batch.rank() != expected.size() ||
      !std::equal(spec_.input.begin(), spec_.input.end(), batch.shape().begin() + 1)) {
    expected[0] = batch.rank() ? batch.dim(0) : 0;
    throw DimensionError("network expects input " + shape_to_string(expected) + ", got " + shape_to_string(batch.shape()));
  }
  ForwardTrace trace;
  trace.weight_inputs.resize(layers_.size());
  Tensor h = batch;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    auto& node = layers_[i];
    switch (node.spec.kind) {
      case LayerKind::dense:
      case LayerKind::ws_dense:
      case LayerKind::conv2d:
      case LayerKind::ws_conv2d:
        trace.weight_inputs[i] = h;
        h = linear_forward(node, h);
        break;
      case LayerKind::batchnorm: h = batchnorm_forward(h, *node.bn, mode); break;
      case LayerKind::relu: h = relu(h); break;
      case LayerKind::maxpool: h = maxpool2d(h, node.spec.window); break;
      case LayerKind::flatten: h = flatten(h); break;
    }
    trace.outputs.push_back(h);
  }
  trace.logits = h;
  return trace;
}

}  // namespace wrs

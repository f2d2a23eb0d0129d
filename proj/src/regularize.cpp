#include "wrs/regularize.hpp"

#include <cmath>
#include <string>

#include "wrs/slices.hpp"

namespace wrs {

namespace {

constexpr std::pair<RegularizerMode, std::string_view> kNames[] = {
    {RegularizerMode::none, "none"},
    {RegularizerMode::wd, "wd"},
    {RegularizerMode::wrs, "wrs"},
    {RegularizerMode::wrs_ic, "wrs_ic"},
};

std::size_t parameter_index(const Network& net, std::size_t layer) {
  const auto& params = net.parameters();
  for (std::size_t i = 0; i < params.size(); ++i)
    if (params[i].layer == layer && params[i].is_weight()) return i;
  throw StateError("layer " + std::to_string(layer) + " has no weight parameter");
}

// Normalizes the elements {first + k*stride : k < count} of `w` to unit
// norm and applies the same factor to the matching optimizer buffers.
bool normalize_group(std::span<double> w, std::size_t first, std::size_t stride, std::size_t count, ParamState* state) {
  double ss = 0.0;
  for (std::size_t k = 0; k < count; ++k) ss += w[first + k * stride] * w[first + k * stride];
  if (ss == 0.0) return false;
  const double factor = 1.0 / std::sqrt(ss);
  for (std::size_t k = 0; k < count; ++k) w[first + k * stride] *= factor;
  if (state && state->m.size() == w.size()) {
    for (std::size_t k = 0; k < count; ++k) {
      state->m[first + k * stride] *= factor;
      state->v[first + k * stride] *= factor * factor;
    }
  }
  return true;
}

void rescale_columns(std::span<double> w, std::size_t outs, ParamState* state, RescaleReport& report) {
  const std::size_t per = w.size() / outs;
  for (std::size_t j = 0; j < outs; ++j) {
    if (normalize_group(w, j, outs, per, state)) {
      ++report.slices_rescaled;
    } else {
      ++report.zero_norm_skipped;
    }
  }
}

template <typename ConvRule>
RescaleReport rescale_network(Network& network, bool normalize_output, Optimizer* optimizer, bool rescale_buffers,
                              ConvRule conv_rule) {
  RescaleReport report;
  auto& layers = network.layers();
  for (std::size_t li = 0; li < layers.size(); ++li) {
    auto& node = layers[li];
    if (!node.has_weight()) continue;
    const bool target = node.is_output ? normalize_output : node.scale_invariant;
    if (!target) continue;
    ParamState* state = nullptr;
    if (optimizer && rescale_buffers) state = &optimizer->state(parameter_index(network, li));
    auto w = node.weight->mutable_data();
    const std::size_t outs = node.weight->shape().back();
    if (node.is_conv() && !node.is_output) {
      conv_rule(node, w, state, report);
    } else {
      rescale_columns(w, outs, state, report);
    }
  }
  return report;
}

}  // namespace

std::string_view to_string(RegularizerMode mode) {
  for (const auto& [m, n] : kNames)
    if (m == mode) return n;
  return "unknown";
}

RegularizerMode parse_regularizer_mode(std::string_view name) {
  for (const auto& [m, n] : kNames)
    if (n == name) return m;
  throw ConfigError("unknown regularizer mode '" + std::string(name) + "'");
}

void RegularizerConfig::validate() const {
  if (!(lambda >= 0.0)) throw ConfigError("regularizer lambda must be non-negative");
  if ((mode == RegularizerMode::wrs || mode == RegularizerMode::wrs_ic) && tau < 1) {
    throw ConfigError("rescale period tau must be at least 1");
  }
  if (active_window.start > active_window.end) throw ConfigError("regularizer active window is reversed");
}

RescaleReport weight_rescale(Network& network, bool normalize_output, Optimizer* optimizer, bool rescale_buffers) {
  return rescale_network(network, normalize_output, optimizer, rescale_buffers,
                         [](const LayerNode& node, std::span<double> w, ParamState* state, RescaleReport& report) {
                           rescale_columns(w, node.weight->shape().back(), state, report);
                         });
}

RescaleReport weight_rescale_ic(Network& network, bool normalize_output, Optimizer* optimizer, bool rescale_buffers) {
  return rescale_network(
      network, normalize_output, optimizer, rescale_buffers,
      [](const LayerNode& node, std::span<double> w, ParamState* state, RescaleReport& report) {
        // Kernel [K, K, C_in, C_out]: fiber (ki, kj, :, s) starts at
        // (ki*K + kj)*C_in*C_out + s and strides by C_out.
        const auto& shape = node.weight->shape();
        const std::size_t positions = shape[0] * shape[1], cin = shape[2], cout = shape[3];
        for (std::size_t pos = 0; pos < positions; ++pos) {
          for (std::size_t s = 0; s < cout; ++s) {
            if (normalize_group(w, pos * cin * cout + s, cout, cin, state)) {
              ++report.slices_rescaled;
            } else {
              ++report.zero_norm_skipped;
            }
          }
        }
      });
}

std::vector<double> decay_coefficients(const Network& network, const RegularizerConfig& config, std::size_t epoch) {
  const auto& params = network.parameters();
  std::vector<double> decay(params.size(), 0.0);
  if (!config.active_window.contains(epoch)) return decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    switch (config.mode) {
      case RegularizerMode::none: break;
      case RegularizerMode::wd:
        if (p.is_weight() || p.role == ParamRole::bn_gamma) decay[i] = config.lambda;
        break;
      case RegularizerMode::wrs:
      case RegularizerMode::wrs_ic:
        if (p.is_batchnorm()) decay[i] = config.lambda;
        break;
    }
  }
  return decay;
}

RegularizerOutcome apply_regularizer_step(Network& network, const RegularizerConfig& config, Optimizer& optimizer,
                                          std::uint64_t global_step, std::size_t epoch) {
  RegularizerOutcome outcome;
  const bool rescaling = config.mode == RegularizerMode::wrs || config.mode == RegularizerMode::wrs_ic;
  if (!rescaling || !config.active_window.contains(epoch)) return outcome;
  if (global_step == 0 || global_step % config.tau != 0) return outcome;
  const bool normalize_output = config.normalize_output_layer && config.classification;
  outcome.fired = true;
  outcome.report = config.mode == RegularizerMode::wrs
                       ? weight_rescale(network, normalize_output, &optimizer, config.rescale_optimizer_buffers)
                       : weight_rescale_ic(network, normalize_output, &optimizer, config.rescale_optimizer_buffers);
  return outcome;
}

Tensor wd_gradient_contribution(const Tensor& param, double lambda) {
  if (!(lambda >= 0.0)) throw ValidationError("weight decay lambda must be non-negative");
  std::vector<double> out(param.data().begin(), param.data().end());
  for (auto& v : out) v *= lambda;
  return Tensor(param.shape(), std::move(out));
}

}  // namespace wrs

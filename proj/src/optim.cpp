#include "wrs/optim.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "wrs/slices.hpp"

namespace wrs {

namespace {

constexpr std::pair<OptimizerKind, std::string_view> kNames[] = {
    {OptimizerKind::sgd, "sgd"},     {OptimizerKind::sgdm, "sgdm"},   {OptimizerKind::adam, "adam"},
    {OptimizerKind::adamw, "adamw"}, {OptimizerKind::adamp, "adamp"},
};

void check_sizes(std::span<double> param, std::span<const double> grad, ParamState& state) {
  if (grad.size() != param.size()) {
    throw DimensionError("gradient length " + std::to_string(grad.size()) + " does not match parameter length " +
                         std::to_string(param.size()));
  }
  if (state.m.size() != param.size()) {
    state = ParamState(param.size());
  }
}

// Shared Adam moment update; leaves the direction m_hat/(sqrt(v_hat)+eps) in
// state.effective.
void adam_direction(std::span<const double> param, std::span<const double> grad, ParamState& state,
                    const OptimizerConfig& c, double coupled_decay) {
  ++state.steps;
  const double t = static_cast<double>(state.steps);
  const double bc1 = 1.0 - std::pow(c.momentum, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i] + coupled_decay * param[i];
    state.m[i] = c.momentum * state.m[i] + (1.0 - c.momentum) * g;
    state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * g * g;
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    state.effective[i] = m_hat / (std::sqrt(v_hat) + c.epsilon);
  }
}

}  // namespace

std::string_view to_string(OptimizerKind kind) {
  for (const auto& [k, n] : kNames)
    if (k == kind) return n;
  return "unknown";
}

OptimizerKind parse_optimizer_kind(std::string_view name) {
  for (const auto& [k, n] : kNames)
    if (n == name) return k;
  throw ConfigError("unknown optimizer '" + std::string(name) + "'");
}

void OptimizerConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum/beta1 must lie in [0,1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("beta2 must lie in [0,1)");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
}

void sgd_step(std::span<double> param, std::span<const double> grad, ParamState& state, const OptimizerConfig& config,
              double lr, double decay) {
  check_sizes(param, grad, state);
  ++state.steps;
  std::copy(grad.begin(), grad.end(), state.effective.begin());
  const bool use_momentum = config.kind == OptimizerKind::sgdm && config.momentum > 0.0;
  if (!use_momentum) {
    for (std::size_t i = 0; i < param.size(); ++i) param[i] -= lr * (grad[i] + decay * param[i]);
    return;
  }
  const double mu = config.momentum;
  if (config.decay_inside_momentum) {
    for (std::size_t i = 0; i < param.size(); ++i) {
      state.m[i] = mu * state.m[i] + grad[i] + decay * param[i];
      param[i] -= lr * state.m[i];
    }
  } else {
    for (std::size_t i = 0; i < param.size(); ++i) {
      state.m[i] = mu * state.m[i] + grad[i];
      param[i] -= lr * (state.m[i] + decay * param[i]);
    }
  }
}

void adam_step(std::span<double> param, std::span<const double> grad, ParamState& state, const OptimizerConfig& config,
               double lr, double decay) {
  config.validate();
  check_sizes(param, grad, state);
  const bool coupled = config.kind == OptimizerKind::adam;
  adam_direction(param, grad, state, config, coupled ? decay : 0.0);
  const double shrink = coupled ? 0.0 : decay;
  for (std::size_t i = 0; i < param.size(); ++i) param[i] -= lr * (state.effective[i] + shrink * param[i]);
}

std::vector<double> project_tangent(std::span<const double> weight, std::span<const double> direction,
                                    std::size_t slice_count) {
  if (weight.size() != direction.size() || slice_count == 0 || weight.size() % slice_count != 0) {
    throw DimensionError("project_tangent: weight length " + std::to_string(weight.size()) + ", direction length " +
                         std::to_string(direction.size()) + ", " + std::to_string(slice_count) + " slices");
  }
  std::vector<double> out(direction.begin(), direction.end());
  for (std::size_t j = 0; j < slice_count; ++j) {
    const double ww = slices::squared_norm(weight, slice_count, j);
    if (ww == 0.0) continue;
    const double coef = slices::dot(weight, direction, slice_count, j) / ww;
    for (std::size_t k = j; k < out.size(); k += slice_count) out[k] -= coef * weight[k];
  }
  return out;
}

void adamp_step(std::span<double> param, std::span<const double> grad, ParamState& state, const OptimizerConfig& config,
                double lr, double decay, bool scale_invariant, std::size_t slice_count) {
  config.validate();
  check_sizes(param, grad, state);
  adam_direction(param, grad, state, config, 0.0);
  if (scale_invariant) {
    auto projected = project_tangent(param, state.effective, slice_count);
    std::copy(projected.begin(), projected.end(), state.effective.begin());
  }
  for (std::size_t i = 0; i < param.size(); ++i) param[i] -= lr * (state.effective[i] + decay * param[i]);
}

double effective_gradient_norm(std::span<const double> param, std::span<const double> effective_update) {
  double ww = 0.0, uu = 0.0;
  for (double w : param) ww += w * w;
  for (double u : effective_update) uu += u * u;
  if (ww == 0.0) throw NumericError("effective gradient norm is undefined for a zero-norm weight");
  return std::sqrt(uu) / std::sqrt(ww);
}

double LrSchedule::at(std::size_t epoch) const {
  double lr = initial;
  for (auto e : decay_epochs)
    if (e <= epoch) lr *= decay_factor;
  return lr;
}

void LrSchedule::validate() const {
  if (!(initial > 0.0)) throw ConfigError("initial learning rate must be positive");
  if (!(decay_factor > 0.0 && decay_factor < 1.0)) throw ConfigError("lr decay factor must lie in (0,1)");
  if (!std::is_sorted(decay_epochs.begin(), decay_epochs.end())) throw ConfigError("lr decay epochs must be sorted");
}

Optimizer::Optimizer(OptimizerConfig config, std::size_t parameter_count)
    : config_(config), states_(parameter_count) {
  config_.validate();
}

void Optimizer::step(std::vector<Parameter>& params, std::span<const double> decay, double lr) {
  if (params.size() != states_.size() || decay.size() != params.size()) {
    throw DimensionError("optimizer holds state for " + std::to_string(states_.size()) + " parameters, got " +
                         std::to_string(params.size()) + " parameters and " + std::to_string(decay.size()) +
                         " decay coefficients");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].value.has_grad()) throw StateError("parameter " + params[i].name + " has no gradient");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    auto data = p.value.mutable_data();
    const auto grad = p.value.grad();
    switch (config_.kind) {
      case OptimizerKind::sgd:
      case OptimizerKind::sgdm: sgd_step(data, grad, states_[i], config_, lr, decay[i]); break;
      case OptimizerKind::adam:
      case OptimizerKind::adamw: adam_step(data, grad, states_[i], config_, lr, decay[i]); break;
      case OptimizerKind::adamp:
        adamp_step(data, grad, states_[i], config_, lr, decay[i], p.scale_invariant, p.slice_count());
        break;
    }
  }
  ++steps_;
}

}  // namespace wrs

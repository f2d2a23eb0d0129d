#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "wrs/layers.hpp"

namespace wrs {

enum class OptimizerKind { sgd, sgdm, adam, adamw, adamp };

std::string_view to_string(OptimizerKind kind);
OptimizerKind parse_optimizer_kind(std::string_view name);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::sgd;
  double lr = 0.1;
  double momentum = 0.9;  // SGDM momentum, or beta1 for the Adam family
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // SGDM only: fold the decay term into the momentum buffer (true) or add
  // it to the step outside the buffer (false).
  bool decay_inside_momentum = true;

  bool adaptive() const {
    return kind == OptimizerKind::adam || kind == OptimizerKind::adamw || kind == OptimizerKind::adamp;
  }
  void validate() const;
};

/// Per-parameter optimizer buffers.
struct ParamState {
  std::vector<double> m;  // momentum buffer or first moment
  std::vector<double> v;  // second moment
  // Direction the last step moved along before scaling by the learning
  // rate: the raw gradient for SGD/SGDM, m_hat / (sqrt(v_hat) + eps) for the
  // Adam family (after projection for AdamP).
  std::vector<double> effective;
  std::uint64_t steps = 0;

  explicit ParamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0), effective(n, 0.0) {}
};

// SGD / SGDM with coupled decay. Momentum buffer: buf = mu*buf + g.
void sgd_step(std::span<double> param, std::span<const double> grad, ParamState& state, const OptimizerConfig& config,
              double lr, double decay);

// Adam with bias correction. `kind == adam` adds decay*param to the gradient
// before the moment update; `adamw` (and `adamp`) shrinks the parameter
// directly: param -= lr*(p + decay*param).
void adam_step(std::span<double> param, std::span<const double> grad, ParamState& state, const OptimizerConfig& config,
               double lr, double decay);

// adamw, except that for scale-invariant parameters the Adam direction is
// replaced by its component orthogonal to each output slice of the weight.
// Slices with zero norm are left unprojected.
void adamp_step(std::span<double> param, std::span<const double> grad, ParamState& state, const OptimizerConfig& config,
                double lr, double decay, bool scale_invariant, std::size_t slice_count);

// p - (<w,p>/|w|^2) w for every output slice of w.
std::vector<double> project_tangent(std::span<const double> weight, std::span<const double> direction,
                                    std::size_t slice_count);

// |update| / |param|; throws NumericError when |param| == 0.
double effective_gradient_norm(std::span<const double> param, std::span<const double> effective_update);

/// Step learning-rate schedule: lr(epoch) = initial * factor^(#decay epochs <= epoch).
struct LrSchedule {
  double initial = 0.1;
  std::vector<std::size_t> decay_epochs;
  double decay_factor = 0.1;

  double at(std::size_t epoch) const;
  void validate() const;
};

/// Owns the per-parameter state of one parameter set and applies one update
/// per call to step().
class Optimizer {
 public:
  Optimizer(OptimizerConfig config, std::size_t parameter_count);

  // decay[i] is the weight-decay coefficient for params[i].
  void step(std::vector<Parameter>& params, std::span<const double> decay, double lr);

  const OptimizerConfig& config() const { return config_; }
  std::uint64_t step_count() const { return steps_; }
  ParamState& state(std::size_t i) { return states_.at(i); }
  const ParamState& state(std::size_t i) const { return states_.at(i); }

 private:
  OptimizerConfig config_;
  std::vector<ParamState> states_;
  std::uint64_t steps_ = 0;
};

}  // namespace wrs

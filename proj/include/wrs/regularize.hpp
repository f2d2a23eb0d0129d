#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <string_view>
#include <vector>

#include "wrs/layers.hpp"
#include "wrs/optim.hpp"

namespace wrs {

enum class RegularizerMode { none, wd, wrs, wrs_ic };

std::string_view to_string(RegularizerMode mode);
RegularizerMode parse_regularizer_mode(std::string_view name);

// Half-open epoch range [start, end) in which the regularizer acts.
struct EpochWindow {
  std::size_t start = 0;
  std::size_t end = std::numeric_limits<std::size_t>::max();

  bool contains(std::size_t epoch) const { return epoch >= start && epoch < end; }
};

struct RegularizerConfig {
  RegularizerMode mode = RegularizerMode::none;
  // wd: decay on weights and BN gammas. wrs/wrs_ic: decay on BN gamma and beta only.
  double lambda = 0.0;
  std::size_t tau = 10;
  bool normalize_output_layer = true;
  // Output normalization only applies to classification heads.
  bool classification = true;
  EpochWindow active_window;
  // Rescale optimizer buffers together with the weights they belong to.
  bool rescale_optimizer_buffers = false;

  void validate() const;
};

// Grids searched for WD and WRS.
inline constexpr double kWeightDecayGrid[] = {5e-3, 5e-4, 5e-5};
inline constexpr std::size_t kRescalePeriodGrid[] = {10, 20, 30, 40, 50};

struct RescaleReport {
  std::size_t slices_rescaled = 0;
  std::size_t zero_norm_skipped = 0;
};

// Divides every output slice of each scale-invariant weight by its l2 norm,
// plus each output-layer column when `normalize_output` is set. Batch-norm
// parameters are untouched. When `optimizer` is given and
// `rescale_buffers` is set, each slice's momentum/first-moment buffer is
// scaled by the same factor and the second moment by its square.
RescaleReport weight_rescale(Network& network, bool normalize_output, Optimizer* optimizer = nullptr,
                             bool rescale_buffers = false);

// Input-channel variant: for conv kernels every length-C_in fiber at each
// spatial offset and output channel is normalized separately. Dense
// scale-invariant weights and the output layer fall back to per-column
// rescaling.
RescaleReport weight_rescale_ic(Network& network, bool normalize_output, Optimizer* optimizer = nullptr,
                                bool rescale_buffers = false);

// Decay coefficient for every entry of network.parameters() at `epoch`.
std::vector<double> decay_coefficients(const Network& network, const RegularizerConfig& config, std::size_t epoch);

struct RegularizerOutcome {
  bool fired = false;
  RescaleReport report;
};

// Runs after the optimizer update of step `global_step` (counted from 1).
// Decay is handled by the optimizer through decay_coefficients(); this
// applies the periodic rescale for the wrs modes.
RegularizerOutcome apply_regularizer_step(Network& network, const RegularizerConfig& config, Optimizer& optimizer,
                                          std::uint64_t global_step, std::size_t epoch);

// Gradient of (lambda/2)|w|^2.
Tensor wd_gradient_contribution(const Tensor& param, double lambda);

}  // namespace wrs

#pragma once

#include <filesystem>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace wrs {

enum class PlotKind { norm_traj, acc_vs_hyper, beta_profile, overfit_compare };

// Throws ConfigError for an unknown kind.
PlotKind parse_plot_kind(std::string_view name);
std::string_view to_string(PlotKind kind);

struct PlotPoint {
  std::string series;
  double x = 0.0;
  double y = 0.0;
};

inline constexpr double kPlotEmaAlpha = 0.6;

// Long-format plot data read from run or sweep directories:
//   norm_traj        one run; per weight layer w<k>: weight_norm and
//                    effective_ratio against step, plus effective_ratio.ema
//   acc_vs_hyper     one sweep; mean final test accuracy against the first
//                    numeric axis, one series per combination of the other axes,
//                    plus matching .std series
//   beta_profile     one run; GGD shape of raw weights (beta_param) and of
//                    input-space coordinates (beta_isp) per hidden layer,
//                    from final.snap
//   overfit_compare  two or more runs; <run_id>.test_acc and .train_acc on
//                    the epochs all runs share
std::vector<PlotPoint> emit_plotdata(std::span<const std::filesystem::path> inputs, PlotKind kind);

void write_plotdata(std::ostream& out, const std::vector<PlotPoint>& points);

}  // namespace wrs

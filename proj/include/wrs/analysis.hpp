#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "wrs/dataset.hpp"
#include "wrs/layers.hpp"
#include "wrs/optim.hpp"

namespace wrs {

// ---------------------------------------------------------------------------
// Norm trajectories

struct WeightMetrics {
  std::size_t layer = 0;
  bool scale_invariant = false;
  double weight_norm = 0.0;     // Frobenius norm of the whole weight
  double grad_norm = 0.0;       // raw loss gradient
  double effective_norm = 0.0;  // direction actually applied (see ParamState::effective)
  double effective_ratio = 0.0; // effective_norm / weight_norm
  std::vector<double> slice_weight_norms;
  std::vector<double> slice_grad_norms;
  std::vector<double> slice_effective_ratios;
};

// Norms of every weight parameter, read after the optimizer step (and any
// rescale) of the step whose gradients are still stored in the parameters.
std::vector<WeightMetrics> record_step_metrics(const Network& network, const Optimizer& optimizer);

struct NormTrajectory {
  std::size_t layer = 0;
  std::size_t slice = 0;
  std::vector<std::uint64_t> steps;
  std::vector<double> weight_norms;
  std::vector<double> grad_norms;
  std::vector<double> effective_ratios;

  void append(std::uint64_t step, double weight_norm, double grad_norm, double ratio);
};

// |W(0)|^2 exp(-2 lambda t) at each t.
std::vector<double> continuous_decay_reference(double norm0_sq, double lambda, std::span<const double> t_grid);

// smoothed <- alpha*x + (1-alpha)*smoothed, seeded with the first value.
std::vector<double> ema(std::span<const double> values, double alpha = 0.6);

// Spearman rank correlation (average ranks for ties).
double spearman(std::span<const double> x, std::span<const double> y);

// ---------------------------------------------------------------------------
// Generalized Gaussian fit: density proportional to exp(-(|x - mu|/alpha)^beta)

struct GGDFit {
  double beta = 2.0;
  double alpha = 1.0;
  double mu = 0.0;
  std::size_t n_samples = 0;
  double log_likelihood = 0.0;
  bool clamped = false;  // moment ratio fell outside the search box
};

inline constexpr double kGgdBetaMin = 0.05;
inline constexpr double kGgdBetaMax = 50.0;

// (E|x|)^2 / E[x^2] for a zero-centred GGD of shape beta.
double ggd_moment_ratio(double beta);

// mu = sample median; beta solves ggd_moment_ratio(beta) = M by bisection to
// |d beta| < 1e-4 in [0.05, 50]; alpha = sqrt(var * G(1/b) / G(3/b)).
GGDFit fit_ggd(std::span<const double> samples);

// ---------------------------------------------------------------------------
// Feature covariance and input-space projection

struct SymmetricEigen {
  std::size_t n = 0;
  std::vector<double> values;   // descending
  std::vector<double> vectors;  // row-major n x n, column k pairs with values[k]
};

// Symmetric row-major matrix; the input is symmetrized first.
SymmetricEigen symmetric_eigen(std::span<const double> matrix, std::size_t n);

// Streaming first/second moments; merge() combines shards exactly.
class CovarianceAccumulator {
 public:
  explicit CovarianceAccumulator(std::size_t dim);

  void add(std::span<const double> row);
  void add_rows(std::span<const double> rows);
  void merge(const CovarianceAccumulator& other);

  std::size_t dim() const { return dim_; }
  std::size_t count() const { return count_; }
  std::vector<double> mean() const;
  // (1/N) sum h h^T - mu mu^T
  std::vector<double> covariance() const;

 private:
  std::size_t dim_;
  std::size_t count_ = 0;
  std::vector<double> sum_;
  std::vector<double> outer_;
};

struct CovarianceSummary {
  std::size_t layer = 0;
  std::size_t samples = 0;
  std::vector<double> mean;
  std::vector<double> covariance;  // row-major dim x dim
  std::vector<double> eigenvalues; // descending, values below -1e-10 clamped to 0
  std::vector<double> eigenvectors;

  std::size_t dim() const { return mean.size(); }
};

inline constexpr std::size_t kMaxFeatureDim = 4096;
inline constexpr std::size_t kMaxPatches = 1'000'000;

// Eigendecomposition of an accumulated covariance.
CovarianceSummary summarize_covariance(const CovarianceAccumulator& acc, std::size_t layer);

// Input features of weight layer `layer` over the whole dataset (eval-mode
// forward). Conv layers contribute one row per patch; patches beyond
// max_patches are subsampled uniformly with a fixed seed.
CovarianceSummary estimate_feature_covariance(Network& network, const Dataset& data, std::size_t layer,
                                              std::size_t max_patches = kMaxPatches, std::uint64_t seed = 0);

// Coordinates of a weight slice in the eigenbasis: U^T w.
std::vector<double> project_weights_isp(std::span<const double> weight_slice, const CovarianceSummary& cov);

struct SparsityRow {
  std::size_t ordinal = 0;  // 0-based index among hidden weight layers
  std::size_t layer = 0;    // index into Network::layers()
  GGDFit param_fit;         // raw weight values
  GGDFit isp_fit;           // all slices projected onto the input eigenbasis
};

// One row per hidden (non-output) weight layer.
std::vector<SparsityRow> sparsity_profile(Network& network, const Dataset& data);

}  // namespace wrs

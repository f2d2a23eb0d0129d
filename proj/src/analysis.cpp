#include "wrs/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include <Eigen/Eigenvalues>

#include "wrs/slices.hpp"

namespace wrs {

namespace {

double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

std::vector<double> ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
    i = j + 1;
  }
  return r;
}

double median(std::vector<double> v) {
  const std::size_t n = v.size();
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n / 2), v.end());
  const double upper = v[n / 2];
  if (n % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n / 2));
  return 0.5 * (lower + upper);
}

// Rows of features feeding weight layer `layer` for one batch.
std::vector<double> layer_feature_rows(const LayerNode& node, const Tensor& input, std::size_t& row_dim) {
  if (node.is_conv()) {
    const Conv2dGeometry g = conv2d_geometry(input.shape(), node.weight->shape(), node.spec.stride, node.spec.padding);
    row_dim = g.patch_size();
    return im2col(input.data(), g);
  }
  row_dim = input.numel() / input.dim(0);
  return {input.data().begin(), input.data().end()};
}

}  // namespace

std::vector<WeightMetrics> record_step_metrics(const Network& network, const Optimizer& optimizer) {
  std::vector<WeightMetrics> out;
  const auto& params = network.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    if (!p.is_weight()) continue;
    WeightMetrics m;
    m.layer = p.layer;
    m.scale_invariant = p.scale_invariant;
    const auto w = p.value.data();
    const auto& state = optimizer.state(i);
    const bool have_grad = p.value.has_grad();
    const auto g = have_grad ? p.value.grad() : std::span<const double>{};
    const std::size_t outs = p.slice_count();
    m.weight_norm = norm2(w);
    m.grad_norm = have_grad ? norm2(g) : 0.0;
    m.effective_norm = state.effective.size() == w.size() ? norm2(state.effective) : 0.0;
    m.effective_ratio = m.weight_norm > 0.0 ? m.effective_norm / m.weight_norm : 0.0;
    m.slice_weight_norms.resize(outs);
    m.slice_grad_norms.resize(outs);
    m.slice_effective_ratios.resize(outs);
    for (std::size_t j = 0; j < outs; ++j) {
      const double wn = slices::norm(w, outs, j);
      m.slice_weight_norms[j] = wn;
      m.slice_grad_norms[j] = have_grad ? slices::norm(g, outs, j) : 0.0;
      const double en = state.effective.size() == w.size() ? slices::norm(state.effective, outs, j) : 0.0;
      m.slice_effective_ratios[j] = wn > 0.0 ? en / wn : 0.0;
    }
    out.push_back(std::move(m));
  }
  return out;
}

void NormTrajectory::append(std::uint64_t step, double weight_norm, double grad_norm, double ratio) {
  steps.push_back(step);
  weight_norms.push_back(weight_norm);
  grad_norms.push_back(grad_norm);
  effective_ratios.push_back(ratio);
}

std::vector<double> continuous_decay_reference(double norm0_sq, double lambda, std::span<const double> t_grid) {
  if (!(lambda >= 0.0)) throw ValidationError("decay reference needs lambda >= 0");
  if (!(norm0_sq > 0.0)) throw ValidationError("decay reference needs a positive initial squared norm");
  std::vector<double> out;
  out.reserve(t_grid.size());
  for (double t : t_grid) out.push_back(norm0_sq * std::exp(-2.0 * lambda * t));
  return out;
}

std::vector<double> ema(std::span<const double> values, double alpha) {
  std::vector<double> out;
  out.reserve(values.size());
  double s = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    s = i == 0 ? values[0] : alpha * values[i] + (1.0 - alpha) * s;
    out.push_back(s);
  }
  return out;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw ValidationError("spearman needs two equal-length series of length >= 2");
  const auto rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

double ggd_moment_ratio(double beta) {
  return std::exp(2.0 * std::lgamma(2.0 / beta) - std::lgamma(1.0 / beta) - std::lgamma(3.0 / beta));
}

GGDFit fit_ggd(std::span<const double> samples) {
  if (samples.size() < 100) {
    throw ValidationError("fit_ggd needs at least 100 samples, got " + std::to_string(samples.size()));
  }
  GGDFit fit;
  fit.n_samples = samples.size();
  fit.mu = median(std::vector<double>(samples.begin(), samples.end()));
  const double n = static_cast<double>(samples.size());
  double abs_sum = 0.0, sq_sum = 0.0;
  for (double x : samples) {
    const double d = std::abs(x - fit.mu);
    abs_sum += d;
    sq_sum += d * d;
  }
  const double mean_abs = abs_sum / n;
  const double var = sq_sum / n;
  if (!(var > 0.0)) throw NumericError("fit_ggd: samples have zero spread");
  const double target = mean_abs * mean_abs / var;

  double lo = kGgdBetaMin, hi = kGgdBetaMax;
  if (target <= ggd_moment_ratio(lo)) {
    fit.beta = lo;
    fit.clamped = true;
  } else if (target >= ggd_moment_ratio(hi)) {
    fit.beta = hi;
    fit.clamped = true;
  } else {
    while (hi - lo >= 1e-4) {
      const double mid = 0.5 * (lo + hi);
      if (ggd_moment_ratio(mid) < target) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    fit.beta = 0.5 * (lo + hi);
  }
  const double b = fit.beta;
  fit.alpha = std::sqrt(var * std::exp(std::lgamma(1.0 / b) - std::lgamma(3.0 / b)));
  double tail = 0.0;
  for (double x : samples) tail += std::pow(std::abs(x - fit.mu) / fit.alpha, b);
  fit.log_likelihood = n * (std::log(b) - std::log(2.0 * fit.alpha) - std::lgamma(1.0 / b)) - tail;
  return fit;
}

SymmetricEigen symmetric_eigen(std::span<const double> matrix, std::size_t n) {
  if (matrix.size() != n * n) {
    throw DimensionError("symmetric_eigen: " + std::to_string(matrix.size()) + " values for a " + std::to_string(n) +
                         "x" + std::to_string(n) + " matrix");
  }
  using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const auto idx = static_cast<Eigen::Index>(n);
  const RowMatrix a = Eigen::Map<const RowMatrix>(matrix.data(), idx, idx);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver((a + a.transpose()) / 2.0);
  if (solver.info() != Eigen::Success) throw NumericError("symmetric eigendecomposition did not converge");

  // Eigen returns ascending order.
  SymmetricEigen out;
  out.n = n;
  out.values.resize(n);
  out.vectors.resize(n * n);
  for (std::size_t k = 0; k < n; ++k) {
    const auto src = static_cast<Eigen::Index>(n - 1 - k);
    out.values[k] = solver.eigenvalues()(src);
    for (std::size_t r = 0; r < n; ++r) out.vectors[r * n + k] = solver.eigenvectors()(static_cast<Eigen::Index>(r), src);
  }
  return out;
}

CovarianceAccumulator::CovarianceAccumulator(std::size_t dim) : dim_(dim), sum_(dim, 0.0), outer_(dim * dim, 0.0) {
  if (dim == 0) throw ValidationError("covariance dimension must be positive");
  if (dim > kMaxFeatureDim) {
    throw ValidationError("feature dimension " + std::to_string(dim) + " exceeds the limit of " +
                          std::to_string(kMaxFeatureDim));
  }
}

void CovarianceAccumulator::add(std::span<const double> row) {
  if (row.size() != dim_) {
    throw DimensionError("covariance row of length " + std::to_string(row.size()) + ", expected " + std::to_string(dim_));
  }
  ++count_;
  for (std::size_t i = 0; i < dim_; ++i) {
    const double ri = row[i];
    sum_[i] += ri;
    if (ri == 0.0) continue;
    double* o = outer_.data() + i * dim_;
    for (std::size_t j = i; j < dim_; ++j) o[j] += ri * row[j];
  }
}

void CovarianceAccumulator::add_rows(std::span<const double> rows) {
  if (rows.size() % dim_ != 0) throw DimensionError("covariance rows are not a multiple of the feature dimension");
  for (std::size_t r = 0; r < rows.size() / dim_; ++r) add(rows.subspan(r * dim_, dim_));
}

void CovarianceAccumulator::merge(const CovarianceAccumulator& other) {
  if (other.dim_ != dim_) throw DimensionError("cannot merge covariance accumulators of different dimension");
  count_ += other.count_;
  for (std::size_t i = 0; i < sum_.size(); ++i) sum_[i] += other.sum_[i];
  for (std::size_t i = 0; i < outer_.size(); ++i) outer_[i] += other.outer_[i];
}

std::vector<double> CovarianceAccumulator::mean() const {
  if (count_ == 0) throw StateError("covariance accumulator is empty");
  std::vector<double> m(sum_);
  for (auto& v : m) v /= static_cast<double>(count_);
  return m;
}

std::vector<double> CovarianceAccumulator::covariance() const {
  const auto m = mean();
  const double n = static_cast<double>(count_);
  std::vector<double> c(dim_ * dim_);
  for (std::size_t i = 0; i < dim_; ++i)
    for (std::size_t j = i; j < dim_; ++j) c[i * dim_ + j] = c[j * dim_ + i] = outer_[i * dim_ + j] / n - m[i] * m[j];
  return c;
}

CovarianceSummary summarize_covariance(const CovarianceAccumulator& acc, std::size_t layer) {
  CovarianceSummary s;
  s.layer = layer;
  s.samples = acc.count();
  s.mean = acc.mean();
  s.covariance = acc.covariance();
  auto eig = symmetric_eigen(s.covariance, acc.dim());
  for (auto& v : eig.values)
    if (v < -1e-10) v = 0.0;
  s.eigenvalues = std::move(eig.values);
  s.eigenvectors = std::move(eig.vectors);
  return s;
}

CovarianceSummary estimate_feature_covariance(Network& network, const Dataset& data, std::size_t layer,
                                              std::size_t max_patches, std::uint64_t seed) {
  if (data.size() == 0) throw ValidationError("feature covariance needs a non-empty dataset");
  const auto& layers = network.layers();
  if (layer >= layers.size() || !layers[layer].has_weight()) {
    throw ValidationError("layer " + std::to_string(layer) + " is not a weight layer");
  }
  const LayerNode& node = layers[layer];
  const auto& ws = node.weight->shape();
  const std::size_t dim = shape_numel(ws) / ws.back();
  CovarianceAccumulator acc(dim);

  constexpr std::size_t kChunk = 256;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  // Keep probability, fixed from the patches-per-sample of the first chunk.
  double keep = 1.0;
  bool keep_known = !node.is_conv();
  for (std::size_t start = 0; start < data.size(); start += kChunk) {
    const std::size_t stop = std::min(data.size(), start + kChunk);
    std::vector<std::size_t> idx(stop - start);
    std::iota(idx.begin(), idx.end(), start);
    NoGradGuard no_grad;
    auto trace = network.forward_trace(data.batch(idx), Mode::eval);
    std::size_t row_dim = 0;
    const auto rows = layer_feature_rows(node, *trace.weight_inputs[layer], row_dim);
    if (!keep_known) {
      const std::size_t total_rows = rows.size() / row_dim / idx.size() * data.size();
      keep = total_rows > max_patches ? static_cast<double>(max_patches) / static_cast<double>(total_rows) : 1.0;
      keep_known = true;
    }
    for (std::size_t r = 0; r < rows.size() / row_dim; ++r) {
      if (keep < 1.0 && unit(rng) >= keep) continue;
      acc.add(std::span<const double>(rows).subspan(r * row_dim, row_dim));
    }
  }
  if (acc.count() == 0) throw ValidationError("no feature rows were collected");
  return summarize_covariance(acc, layer);
}

std::vector<double> project_weights_isp(std::span<const double> weight_slice, const CovarianceSummary& cov) {
  const std::size_t n = cov.dim();
  if (weight_slice.size() != n) {
    throw DimensionError("ISP: weight slice of length " + std::to_string(weight_slice.size()) +
                         " against a " + std::to_string(n) + "-dimensional eigenbasis");
  }
  std::vector<double> out(n, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    const double w = weight_slice[r];
    const double* row = cov.eigenvectors.data() + r * n;
    for (std::size_t k = 0; k < n; ++k) out[k] += row[k] * w;
  }
  return out;
}

std::vector<SparsityRow> sparsity_profile(Network& network, const Dataset& data) {
  std::vector<SparsityRow> rows;
  const auto hidden = network.hidden_weight_layers();
  for (std::size_t ord = 0; ord < hidden.size(); ++ord) {
    const std::size_t li = hidden[ord];
    const Tensor& w = *network.layers()[li].weight;
    const std::size_t outs = w.shape().back();
    const std::size_t per = w.numel() / outs;
    const auto cov = estimate_feature_covariance(network, data, li);
    std::vector<double> projected;
    projected.reserve(w.numel());
    std::vector<double> slice(per);
    for (std::size_t j = 0; j < outs; ++j) {
      for (std::size_t k = 0; k < per; ++k) slice[k] = w[k * outs + j];
      const auto coords = project_weights_isp(slice, cov);
      projected.insert(projected.end(), coords.begin(), coords.end());
    }
    rows.push_back({ord, li, fit_ggd(w.data()), fit_ggd(projected)});
  }
  return rows;
}

}  // namespace wrs

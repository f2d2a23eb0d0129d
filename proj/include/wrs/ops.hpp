#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "wrs/tensor.hpp"

namespace wrs {

// Differentiable operations. Each returns a new tensor; when any input
// requires a gradient the result records how to propagate into it.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor sum(const Tensor& a);
// Scalar inner product over all elements.
Tensor dot(const Tensor& a, const Tensor& b);
Tensor reshape(const Tensor& a, Shape shape);
// Collapses every axis after the first: [B, ...] -> [B, prod(...)].
Tensor flatten(const Tensor& a);

// max(0, x); the subgradient at exactly zero is 0.
Tensor relu(const Tensor& x);

// Mean over the batch of -log softmax(logits)[label].
Tensor softmax_xent(const Tensor& logits, std::span<const std::size_t> labels);

struct Conv2dGeometry {
  std::size_t batch = 0, in_channels = 0, height = 0, width = 0;
  std::size_t kernel = 0, out_channels = 0, stride = 1, padding = 0;
  std::size_t out_height = 0, out_width = 0;

  std::size_t patch_size() const { return kernel * kernel * in_channels; }
  std::size_t patch_count() const { return batch * out_height * out_width; }
};

// Validates input [B,C,H,W] against kernel [K,K,C_in,C_out].
Conv2dGeometry conv2d_geometry(const Shape& input, const Shape& kernel, std::size_t stride, std::size_t padding);

// Patch matrix of shape [B*H'*W', K*K*C_in]. Row r = (b, oh, ow); column
// (ki*K + kj)*C_in + c, which matches the flattening of a [K,K,C_in,C_out]
// kernel into a [K*K*C_in, C_out] matrix.
std::vector<double> im2col(std::span<const double> input, const Conv2dGeometry& g);

// Cross-correlation (no kernel flip) via im2col + matmul.
Tensor conv2d(const Tensor& input, const Tensor& kernel, std::size_t stride, std::size_t padding);

// Non-overlapping max pooling with a square window; trailing rows/columns
// that do not fill a window are dropped.
Tensor maxpool2d(const Tensor& input, std::size_t window);

struct BatchMoments {
  std::vector<double> mean;
  std::vector<double> var;  // biased (divides by the count)
};

// Per-channel moments of [B,C] or [B,C,H,W]; conv inputs pool over batch and
// spatial positions.
BatchMoments channel_moments(const Tensor& x);

// Normalizes by the batch's own moments, then applies gamma/beta.
// Writes the moments it used into `moments` when non-null.
Tensor batch_norm_train(const Tensor& x, const Tensor& gamma, const Tensor& beta, double epsilon,
                        BatchMoments* moments = nullptr);

// Normalizes by fixed statistics (no gradient flows into them).
Tensor batch_norm_eval(const Tensor& x, const Tensor& gamma, const Tensor& beta, std::span<const double> mean,
                       std::span<const double> var, double epsilon);

// Per output channel (last axis) standardization: (w - mean) / sqrt(var + eps).
Tensor weight_standardize(const Tensor& weight, double epsilon = 1e-12);

namespace linalg {

// C[m x n] (+)= A[m x k] * B[k x n], all row-major.
void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate = false);
// C[k x n] (+)= A[m x k]^T * B[m x n]
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate = false);
// C[m x k] (+)= A[m x n] * B[k x n]^T
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t n, std::size_t k, bool accumulate = false);

}  // namespace linalg

}  // namespace wrs

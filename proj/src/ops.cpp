#include "wrs/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace wrs {

namespace linalg {

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate) {
  if (!accumulate) std::fill(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(m * n), 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c.data() + i * n;
    const double* arow = a.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate) {
  if (!accumulate) std::fill(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(k * n), 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a.data() + i * k;
    const double* brow = b.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      double* crow = c.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t n, std::size_t k, bool accumulate) {
  if (!accumulate) std::fill(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(m * k), 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a.data() + i * n;
    double* crow = c.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = b.data() + p * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
      crow[p] += acc;
    }
  }
}

}  // namespace linalg

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes " + shape_to_string(a.shape()) + " and " +
                         shape_to_string(b.shape()) + " differ");
  }
}

// Channel axis is 1; everything after it is pooled as "spatial".
struct ChannelLayout {
  std::size_t batch, channels, inner;
  std::size_t count() const { return batch * inner; }
  std::size_t index(std::size_t b, std::size_t c, std::size_t s) const { return (b * channels + c) * inner + s; }
};

ChannelLayout channel_layout(const Tensor& x) {
  if (x.rank() != 2 && x.rank() != 4) {
    throw DimensionError("batch norm expects [B,C] or [B,C,H,W], got " + shape_to_string(x.shape()));
  }
  std::size_t inner = 1;
  for (std::size_t i = 2; i < x.rank(); ++i) inner *= x.dim(i);
  return {x.dim(0), x.dim(1), inner};
}

void check_channel_param(const Tensor& p, std::size_t channels, const char* name) {
  if (p.numel() != channels) {
    throw DimensionError(std::string("batch norm ") + name + " has " + std::to_string(p.numel()) +
                         " entries for " + std::to_string(channels) + " channels");
  }
}

// Gradient of y = gamma * xhat + beta with xhat = (x - mean) / sd where the
// moments are taken over `groups`: dx = (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat)) / sd.
template <typename IndexFn>
void normalized_input_grad(std::span<const double> dxhat, std::span<const double> xhat, double sd, std::size_t count,
                           IndexFn index, std::span<double> dx) {
  double sum_d = 0.0, sum_dx = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const auto k = index(i);
    sum_d += dxhat[k];
    sum_dx += dxhat[k] * xhat[k];
  }
  const double mean_d = sum_d / static_cast<double>(count);
  const double mean_dx = sum_dx / static_cast<double>(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto k = index(i);
    dx[k] = (dxhat[k] - mean_d - xhat[k] * mean_dx) / sd;
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: cannot multiply " + shape_to_string(a.shape()) + " by " +
                         shape_to_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n);
  linalg::gemm_nn(a.data(), b.data(), out, m, k, n);
  return make_result({m, n}, std::move(out), {a, b}, [a, b, m, k, n](std::span<const double> g) {
    if (a.requires_grad()) {
      std::vector<double> da(m * k);
      linalg::gemm_nt(g, b.data(), da, m, n, k);
      accumulate_grad(a, da);
    }
    if (b.requires_grad()) {
      std::vector<double> db(k * n);
      linalg::gemm_tn(a.data(), g, db, m, k, n);
      accumulate_grad(b, db);
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return make_result(a.shape(), std::move(out), {a, b}, [a, b](std::span<const double> g) {
    accumulate_grad(a, g);
    accumulate_grad(b, g);
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return make_result(a.shape(), std::move(out), {a, b}, [a, b](std::span<const double> g) {
    std::vector<double> d(g.size());
    if (a.requires_grad()) {
      for (std::size_t i = 0; i < d.size(); ++i) d[i] = g[i] * b[i];
      accumulate_grad(a, d);
    }
    if (b.requires_grad()) {
      for (std::size_t i = 0; i < d.size(); ++i) d[i] = g[i] * a[i];
      accumulate_grad(b, d);
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * factor;
  return make_result(a.shape(), std::move(out), {a}, [a, factor](std::span<const double> g) {
    std::vector<double> d(g.begin(), g.end());
    for (auto& v : d) v *= factor;
    accumulate_grad(a, d);
  });
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.data()) total += v;
  return make_result({}, {total}, {a}, [a](std::span<const double> g) {
    accumulate_grad(a, std::vector<double>(a.numel(), g[0]));
  });
}

Tensor dot(const Tensor& a, const Tensor& b) {
  if (a.numel() != b.numel()) {
    throw DimensionError("dot: " + shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()));
  }
  double total = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) total += a[i] * b[i];
  return make_result({}, {total}, {a, b}, [a, b](std::span<const double> g) {
    std::vector<double> d(a.numel());
    if (a.requires_grad()) {
      for (std::size_t i = 0; i < d.size(); ++i) d[i] = g[0] * b[i];
      accumulate_grad(a, d);
    }
    if (b.requires_grad()) {
      for (std::size_t i = 0; i < d.size(); ++i) d[i] = g[0] * a[i];
      accumulate_grad(b, d);
    }
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: " + shape_to_string(a.shape()) + " to " + shape_to_string(shape));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  return make_result(std::move(shape), std::move(out), {a}, [a](std::span<const double> g) { accumulate_grad(a, g); });
}

Tensor flatten(const Tensor& a) {
  if (a.rank() < 2) throw DimensionError("flatten needs a batch axis, got " + shape_to_string(a.shape()));
  return reshape(a, {a.dim(0), a.numel() / a.dim(0)});
}

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
  return make_result(x.shape(), std::move(out), {x}, [x](std::span<const double> g) {
    std::vector<double> d(g.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = x[i] > 0.0 ? g[i] : 0.0;
    accumulate_grad(x, d);
  });
}

Tensor softmax_xent(const Tensor& logits, std::span<const std::size_t> labels) {
  if (logits.rank() != 2) throw DimensionError("softmax_xent expects [B,K] logits, got " + shape_to_string(logits.shape()));
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  if (labels.size() != batch) {
    throw ValidationError("softmax_xent: " + std::to_string(labels.size()) + " labels for batch of " +
                          std::to_string(batch));
  }
  std::vector<double> probs(batch * classes);
  double loss = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    if (labels[b] >= classes) {
      throw ValidationError("softmax_xent: label " + std::to_string(labels[b]) + " outside [0," +
                            std::to_string(classes) + ")");
    }
    const double* row = logits.data().data() + b * classes;
    const double top = *std::max_element(row, row + classes);
    double z = 0.0;
    for (std::size_t k = 0; k < classes; ++k) z += std::exp(row[k] - top);
    const double log_z = std::log(z);
    for (std::size_t k = 0; k < classes; ++k) probs[b * classes + k] = std::exp(row[k] - top - log_z);
    loss -= row[labels[b]] - top - log_z;
  }
  loss /= static_cast<double>(batch);
  std::vector<std::size_t> owned(labels.begin(), labels.end());
  return make_result({}, {loss}, {logits},
                     [logits, probs = std::move(probs), owned = std::move(owned), batch, classes](std::span<const double> g) {
                       std::vector<double> d(probs);
                       for (std::size_t b = 0; b < batch; ++b) d[b * classes + owned[b]] -= 1.0;
                       const double s = g[0] / static_cast<double>(batch);
                       for (auto& v : d) v *= s;
                       accumulate_grad(logits, d);
                     });
}

Conv2dGeometry conv2d_geometry(const Shape& input, const Shape& kernel, std::size_t stride, std::size_t padding) {
  if (input.size() != 4 || kernel.size() != 4) {
    throw DimensionError("conv2d expects input [B,C,H,W] and kernel [K,K,C_in,C_out], got " +
                         shape_to_string(input) + " and " + shape_to_string(kernel));
  }
  if (kernel[0] != kernel[1]) throw DimensionError("conv2d kernel must be square, got " + shape_to_string(kernel));
  if (kernel[2] != input[1]) {
    throw DimensionError("conv2d kernel expects " + std::to_string(kernel[2]) + " input channels, input " +
                         shape_to_string(input) + " has " + std::to_string(input[1]));
  }
  if (stride == 0) throw ValidationError("conv2d stride must be positive");
  Conv2dGeometry g;
  g.batch = input[0];
  g.in_channels = input[1];
  g.height = input[2];
  g.width = input[3];
  g.kernel = kernel[0];
  g.out_channels = kernel[3];
  g.stride = stride;
  g.padding = padding;
  const std::size_t ph = g.height + 2 * padding, pw = g.width + 2 * padding;
  if (g.kernel == 0 || g.kernel > ph || g.kernel > pw) {
    throw DimensionError("conv2d kernel " + shape_to_string(kernel) + " does not fit input " + shape_to_string(input) +
                         " with padding " + std::to_string(padding));
  }
  g.out_height = (ph - g.kernel) / stride + 1;
  g.out_width = (pw - g.kernel) / stride + 1;
  return g;
}

namespace {

template <typename Visit>
void for_each_patch_entry(const Conv2dGeometry& g, Visit visit) {
  const std::size_t cols = g.patch_size();
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t oh = 0; oh < g.out_height; ++oh) {
      for (std::size_t ow = 0; ow < g.out_width; ++ow) {
        const std::size_t row = (b * g.out_height + oh) * g.out_width + ow;
        for (std::size_t ki = 0; ki < g.kernel; ++ki) {
          const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride + ki) - static_cast<std::ptrdiff_t>(g.padding);
          for (std::size_t kj = 0; kj < g.kernel; ++kj) {
            const auto iw = static_cast<std::ptrdiff_t>(ow * g.stride + kj) - static_cast<std::ptrdiff_t>(g.padding);
            if (ih < 0 || iw < 0 || ih >= static_cast<std::ptrdiff_t>(g.height) ||
                iw >= static_cast<std::ptrdiff_t>(g.width)) {
              continue;
            }
            for (std::size_t c = 0; c < g.in_channels; ++c) {
              const std::size_t col = (ki * g.kernel + kj) * g.in_channels + c;
              const std::size_t src = ((b * g.in_channels + c) * g.height + static_cast<std::size_t>(ih)) * g.width +
                                      static_cast<std::size_t>(iw);
              visit(row * cols + col, src);
            }
          }
        }
      }
    }
  }
}

}  // namespace

std::vector<double> im2col(std::span<const double> input, const Conv2dGeometry& g) {
  std::vector<double> cols(g.patch_count() * g.patch_size(), 0.0);
  for_each_patch_entry(g, [&](std::size_t dst, std::size_t src) { cols[dst] = input[src]; });
  return cols;
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, std::size_t stride, std::size_t padding) {
  const Conv2dGeometry g = conv2d_geometry(input.shape(), kernel.shape(), stride, padding);
  const std::size_t rows = g.patch_count(), cols = g.patch_size(), co = g.out_channels;
  const std::size_t spatial = g.out_height * g.out_width;
  auto patches = std::make_shared<std::vector<double>>(im2col(input.data(), g));
  std::vector<double> flat(rows * co);
  linalg::gemm_nn(*patches, kernel.data(), flat, rows, cols, co);

  std::vector<double> out(g.batch * co * spatial);
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t s = 0; s < spatial; ++s)
      for (std::size_t c = 0; c < co; ++c) out[(b * co + c) * spatial + s] = flat[(b * spatial + s) * co + c];

  return make_result({g.batch, co, g.out_height, g.out_width}, std::move(out), {input, kernel},
                     [input, kernel, patches, g, rows, cols, co, spatial](std::span<const double> grad) {
                       std::vector<double> dflat(rows * co);
                       for (std::size_t b = 0; b < g.batch; ++b)
                         for (std::size_t s = 0; s < spatial; ++s)
                           for (std::size_t c = 0; c < co; ++c)
                             dflat[(b * spatial + s) * co + c] = grad[(b * co + c) * spatial + s];
                       if (kernel.requires_grad()) {
                         std::vector<double> dk(cols * co);
                         linalg::gemm_tn(*patches, dflat, dk, rows, cols, co);
                         accumulate_grad(kernel, dk);
                       }
                       if (input.requires_grad()) {
                         std::vector<double> dcols(rows * cols);
                         linalg::gemm_nt(dflat, kernel.data(), dcols, rows, co, cols);
                         std::vector<double> din(input.numel(), 0.0);
                         for_each_patch_entry(g, [&](std::size_t dst, std::size_t src) { din[src] += dcols[dst]; });
                         accumulate_grad(input, din);
                       }
                     });
}

Tensor maxpool2d(const Tensor& input, std::size_t window) {
  if (input.rank() != 4) throw DimensionError("maxpool2d expects [B,C,H,W], got " + shape_to_string(input.shape()));
  if (window == 0) throw ValidationError("maxpool2d window must be positive");
  const std::size_t batch = input.dim(0), ch = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t oh = h / window, ow = w / window;
  if (oh == 0 || ow == 0) {
    throw DimensionError("maxpool2d window " + std::to_string(window) + " exceeds input " + shape_to_string(input.shape()));
  }
  std::vector<double> out(batch * ch * oh * ow);
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t bc = 0; bc < batch * ch; ++bc) {
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        std::size_t best = bc * h * w + (i * window) * w + j * window;
        for (std::size_t di = 0; di < window; ++di)
          for (std::size_t dj = 0; dj < window; ++dj) {
            const std::size_t idx = bc * h * w + (i * window + di) * w + (j * window + dj);
            if (input[idx] > input[best]) best = idx;
          }
        const std::size_t o = (bc * oh + i) * ow + j;
        out[o] = input[best];
        argmax[o] = best;
      }
    }
  }
  return make_result({batch, ch, oh, ow}, std::move(out), {input},
                     [input, argmax = std::move(argmax)](std::span<const double> g) {
                       std::vector<double> d(input.numel(), 0.0);
                       for (std::size_t o = 0; o < argmax.size(); ++o) d[argmax[o]] += g[o];
                       accumulate_grad(input, d);
                     });
}

BatchMoments channel_moments(const Tensor& x) {
  const ChannelLayout lay = channel_layout(x);
  BatchMoments m{std::vector<double>(lay.channels, 0.0), std::vector<double>(lay.channels, 0.0)};
  const double n = static_cast<double>(lay.count());
  for (std::size_t c = 0; c < lay.channels; ++c) {
    double s = 0.0;
    for (std::size_t b = 0; b < lay.batch; ++b)
      for (std::size_t i = 0; i < lay.inner; ++i) s += x[lay.index(b, c, i)];
    const double mean = s / n;
    double ss = 0.0;
    for (std::size_t b = 0; b < lay.batch; ++b)
      for (std::size_t i = 0; i < lay.inner; ++i) {
        const double d = x[lay.index(b, c, i)] - mean;
        ss += d * d;
      }
    m.mean[c] = mean;
    m.var[c] = ss / n;
  }
  return m;
}

Tensor batch_norm_train(const Tensor& x, const Tensor& gamma, const Tensor& beta, double epsilon,
                        BatchMoments* moments) {
  const ChannelLayout lay = channel_layout(x);
  check_channel_param(gamma, lay.channels, "gamma");
  check_channel_param(beta, lay.channels, "beta");
  BatchMoments stats = channel_moments(x);

  std::vector<double> sd(lay.channels);
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  std::vector<double> out(x.numel());
  for (std::size_t c = 0; c < lay.channels; ++c) {
    sd[c] = std::sqrt(stats.var[c] + epsilon);
    for (std::size_t b = 0; b < lay.batch; ++b)
      for (std::size_t i = 0; i < lay.inner; ++i) {
        const auto k = lay.index(b, c, i);
        (*xhat)[k] = (x[k] - stats.mean[c]) / sd[c];
        out[k] = gamma[c] * (*xhat)[k] + beta[c];
      }
  }
  if (moments) *moments = stats;

  return make_result(x.shape(), std::move(out), {x, gamma, beta},
                     [x, gamma, beta, xhat, sd = std::move(sd), lay](std::span<const double> g) {
                       const std::size_t count = lay.count();
                       if (gamma.requires_grad() || beta.requires_grad()) {
                         std::vector<double> dgamma(lay.channels, 0.0), dbeta(lay.channels, 0.0);
                         for (std::size_t c = 0; c < lay.channels; ++c)
                           for (std::size_t b = 0; b < lay.batch; ++b)
                             for (std::size_t i = 0; i < lay.inner; ++i) {
                               const auto k = lay.index(b, c, i);
                               dgamma[c] += g[k] * (*xhat)[k];
                               dbeta[c] += g[k];
                             }
                         accumulate_grad(gamma, dgamma);
                         accumulate_grad(beta, dbeta);
                       }
                       if (!x.requires_grad()) return;
                       std::vector<double> dxhat(x.numel()), dx(x.numel());
                       for (std::size_t c = 0; c < lay.channels; ++c)
                         for (std::size_t b = 0; b < lay.batch; ++b)
                           for (std::size_t i = 0; i < lay.inner; ++i) {
                             const auto k = lay.index(b, c, i);
                             dxhat[k] = g[k] * gamma[c];
                           }
                       for (std::size_t c = 0; c < lay.channels; ++c) {
                         normalized_input_grad(
                             dxhat, *xhat, sd[c], count,
                             [&](std::size_t n) { return lay.index(n / lay.inner, c, n % lay.inner); }, dx);
                       }
                       accumulate_grad(x, dx);
                     });
}

Tensor batch_norm_eval(const Tensor& x, const Tensor& gamma, const Tensor& beta, std::span<const double> mean,
                       std::span<const double> var, double epsilon) {
  const ChannelLayout lay = channel_layout(x);
  check_channel_param(gamma, lay.channels, "gamma");
  check_channel_param(beta, lay.channels, "beta");
  if (mean.size() != lay.channels || var.size() != lay.channels) {
    throw DimensionError("batch norm running statistics do not match " + std::to_string(lay.channels) + " channels");
  }
  std::vector<double> inv_sd(lay.channels);
  for (std::size_t c = 0; c < lay.channels; ++c) inv_sd[c] = 1.0 / std::sqrt(var[c] + epsilon);
  std::vector<double> out(x.numel());
  for (std::size_t b = 0; b < lay.batch; ++b)
    for (std::size_t c = 0; c < lay.channels; ++c)
      for (std::size_t i = 0; i < lay.inner; ++i) {
        const auto k = lay.index(b, c, i);
        out[k] = gamma[c] * (x[k] - mean[c]) * inv_sd[c] + beta[c];
      }
  std::vector<double> mean_copy(mean.begin(), mean.end());
  return make_result(x.shape(), std::move(out), {x, gamma, beta},
                     [x, gamma, beta, inv_sd, mean_copy = std::move(mean_copy), lay](std::span<const double> g) {
                       std::vector<double> dx(x.numel()), dgamma(lay.channels, 0.0), dbeta(lay.channels, 0.0);
                       for (std::size_t b = 0; b < lay.batch; ++b)
                         for (std::size_t c = 0; c < lay.channels; ++c)
                           for (std::size_t i = 0; i < lay.inner; ++i) {
                             const auto k = lay.index(b, c, i);
                             dx[k] = g[k] * gamma[c] * inv_sd[c];
                             dgamma[c] += g[k] * (x[k] - mean_copy[c]) * inv_sd[c];
                             dbeta[c] += g[k];
                           }
                       accumulate_grad(x, dx);
                       accumulate_grad(gamma, dgamma);
                       accumulate_grad(beta, dbeta);
                     });
}

Tensor weight_standardize(const Tensor& weight, double epsilon) {
  if (weight.rank() < 2) throw DimensionError("weight_standardize expects rank >= 2, got " + shape_to_string(weight.shape()));
  const std::size_t outs = weight.shape().back();
  const std::size_t per = weight.numel() / outs;
  if (per < 2) throw ValidationError("weight_standardize needs at least 2 elements per output channel");

  std::vector<double> sd(outs);
  auto xhat = std::make_shared<std::vector<double>>(weight.numel());
  for (std::size_t o = 0; o < outs; ++o) {
    double s = 0.0;
    for (std::size_t i = 0; i < per; ++i) s += weight[i * outs + o];
    const double mean = s / static_cast<double>(per);
    double ss = 0.0;
    for (std::size_t i = 0; i < per; ++i) {
      const double d = weight[i * outs + o] - mean;
      ss += d * d;
    }
    sd[o] = std::sqrt(ss / static_cast<double>(per) + epsilon);
    for (std::size_t i = 0; i < per; ++i) (*xhat)[i * outs + o] = (weight[i * outs + o] - mean) / sd[o];
  }
  std::vector<double> out(*xhat);
  return make_result(weight.shape(), std::move(out), {weight},
                     [weight, xhat, sd = std::move(sd), outs, per](std::span<const double> g) {
                       std::vector<double> dw(weight.numel());
                       for (std::size_t o = 0; o < outs; ++o) {
                         normalized_input_grad(g, *xhat, sd[o], per, [&](std::size_t i) { return i * outs + o; }, dw);
                       }
                       accumulate_grad(weight, dw);
                     });
}

}  // namespace wrs

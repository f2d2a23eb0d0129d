#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "wrs/layers.hpp"

namespace wrs {

// Batch-norm epsilon small enough that normalization is exactly scale
// invariant in double precision. At the training default (1e-5) the
// invariance is off by roughly eps/var.
inline constexpr double kExactBnEpsilon = 1e-30;

struct RandomProblem {
  Network network;
  Tensor batch;
  std::vector<std::size_t> labels;
};

struct RandomProblemOptions {
  bool conv = false;
  double bn_epsilon = kExactBnEpsilon;
  std::size_t max_hidden = 4;
  std::size_t max_width = 64;
  std::size_t min_batch = 2;
  std::size_t max_batch = 32;
};

// Random BN-MLP or BN-CNN with random gamma/beta and a random labelled batch.
RandomProblem random_bn_problem(std::mt19937_64& rng, const RandomProblemOptions& options = {});

// True when the batch norm after this weight sees exactly two values per
// channel. Its output is then +-gamma + beta whatever the weight is, so the
// exact weight gradient is zero and only rounding noise is computed.
bool two_point_statistics(const Network& network, const Parameter& weight, std::size_t batch);

struct DynamicsCheck {
  std::string name;
  bool passed = false;
  double worst = 0.0;  // largest observed value of the checked quantity
  double bound = 0.0;  // pass threshold for `worst`
  std::size_t cases = 0;
  std::string detail;
};

// |<w,g>| / (|w||g|) over every scale-invariant slice of random networks.
DynamicsCheck check_gradient_orthogonality(std::size_t trials, std::uint64_t seed);

// Plain SGD: |w(t+1)|^2 - |w(t)|^2 against lr^2 |g(t)|^2, relative error.
DynamicsCheck check_norm_law(std::size_t steps, std::uint64_t seed);

// Coupled decay with zero gradient against |W(0)|^2 exp(-2 lambda t) at
// lr*lambda in {1e-2, 1e-3, 1e-4}; worst is the largest error/bound ratio.
DynamicsCheck check_exponential_decay();

// Hidden outputs under per-slice rescaling, argmax under a common output
// rescaling, and both under weight_rescale.
DynamicsCheck check_scale_invariance(std::size_t trials, std::uint64_t seed);

// Coupled WD with plain SGD: |w'|^2 = (1 - lr*lambda)^2 |w|^2 + lr^2 |g|^2.
DynamicsCheck check_wd_contraction(std::size_t steps, std::uint64_t seed);

// <w, update> / (|w||update|) for AdamP on every scale-invariant slice.
DynamicsCheck check_adamp_tangency(std::size_t steps, std::uint64_t seed);

std::vector<DynamicsCheck> verify_dynamics(std::size_t trials, std::uint64_t seed);

}  // namespace wrs

#pragma once

#include <cstddef>
#include <span>

#include "wrs/dataset.hpp"
#include "wrs/layers.hpp"

namespace wrs {

// Clears old gradients, runs a train-mode forward on the batch, and
// back-propagates the mean cross-entropy. Returns the loss.
double loss_and_gradients(Network& network, const Tensor& batch, std::span<const std::size_t> labels);

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
};

// Eval-mode loss and accuracy over the whole dataset, in chunks.
Evaluation evaluate(Network& network, const Dataset& data, std::size_t chunk = 512);

// Index of the largest logit in each row of a [B, K] tensor.
std::vector<std::size_t> argmax_rows(const Tensor& logits);

}  // namespace wrs

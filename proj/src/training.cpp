#include "wrs/training.hpp"

#include <algorithm>
#include <numeric>

#include "wrs/ops.hpp"

namespace wrs {

double loss_and_gradients(Network& network, const Tensor& batch, std::span<const std::size_t> labels) {
  network.zero_grad();
  const Tensor loss = softmax_xent(network.forward(batch, Mode::train), labels);
  backward(loss);
  return loss.item();
}

Evaluation evaluate(Network& network, const Dataset& data, std::size_t chunk) {
  if (data.size() == 0) throw ValidationError("cannot evaluate on an empty dataset");
  NoGradGuard guard;
  Evaluation out;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += chunk) {
    const std::size_t n = std::min(chunk, data.size() - start);
    idx.resize(n);
    std::iota(idx.begin(), idx.end(), start);
    const auto labels = data.batch_labels(idx);
    const Tensor logits = network.forward(data.batch(idx), Mode::eval);
    out.loss += softmax_xent(logits, labels).item() * static_cast<double>(n);
    const auto pred = argmax_rows(logits);
    for (std::size_t i = 0; i < n; ++i) out.accuracy += pred[i] == labels[i] ? 1.0 : 0.0;
  }
  out.loss /= static_cast<double>(data.size());
  out.accuracy /= static_cast<double>(data.size());
  return out;
}

std::vector<std::size_t> argmax_rows(const Tensor& logits) {
  if (logits.rank() != 2) throw DimensionError("argmax_rows expects [B,K], got " + shape_to_string(logits.shape()));
  const std::size_t b = logits.dim(0), k = logits.dim(1);
  std::vector<std::size_t> out(b);
  const auto d = logits.data();
  for (std::size_t r = 0; r < b; ++r) {
    const auto row = d.subspan(r * k, k);
    out[r] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

}  // namespace wrs

#include "wrs/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace wrs {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor() : impl_(std::make_shared<TensorImpl>()) { impl_->data.assign(1, 0.0); }

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : impl_(std::make_shared<TensorImpl>()) {
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("tensor shape " + shape_to_string(shape) + " holds " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(data.size()));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({}, {value}, requires_grad); }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= impl_->shape.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                         shape_to_string(impl_->shape));
  }
  return impl_->shape[axis];
}

std::span<double> Tensor::mutable_data() {
  if (!is_leaf()) throw StateError("cannot modify the values of a non-leaf tensor in place");
  return impl_->data;
}

double Tensor::item() const {
  if (numel() != 1) throw ValidationError("item() requires a single-element tensor, shape " + shape_to_string(shape()));
  return impl_->data[0];
}

void Tensor::set_requires_grad(bool value) {
  if (!is_leaf()) throw StateError("requires_grad can only be toggled on leaves");
  impl_->requires_grad = value;
}

std::span<const double> Tensor::grad() const {
  if (!impl_->grad) throw StateError("tensor has no gradient; run backward first");
  return *impl_->grad;
}

std::span<double> Tensor::mutable_grad() {
  if (!impl_->grad) impl_->grad.emplace(numel(), 0.0);
  return *impl_->grad;
}

void Tensor::zero_grad() {
  if (impl_->grad) std::fill(impl_->grad->begin(), impl_->grad->end(), 0.0);
}

Tensor Tensor::detach() const { return Tensor(impl_->shape, impl_->data, false); }

Tensor Tensor::clone() const {
  Tensor out(impl_->shape, impl_->data, impl_->requires_grad);
  if (impl_->grad) out.impl_->grad = impl_->grad;
  return out;
}

namespace {
thread_local bool t_grad_enabled = true;
}

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

bool grad_enabled() { return t_grad_enabled; }

Tensor make_result(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                   std::function<void(std::span<const double>)> propagate) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  const bool tracked = t_grad_enabled && std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
  if (tracked) {
    impl->requires_grad = true;
    impl->grad_fn = std::make_shared<GradNode>(GradNode{std::move(inputs), std::move(propagate)});
  }
  return Tensor(std::move(impl));
}

void accumulate_grad(const Tensor& target, std::span<const double> delta) {
  auto& impl = *target.impl_;
  if (!impl.requires_grad) return;
  if (delta.size() != impl.data.size()) {
    throw DimensionError("gradient of length " + std::to_string(delta.size()) + " for tensor " +
                         shape_to_string(impl.shape));
  }
  if (!impl.grad) {
    impl.grad.emplace(delta.begin(), delta.end());
    return;
  }
  auto& g = *impl.grad;
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += delta[i];
}

void backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw ValidationError("backward requires a scalar loss, got shape " + shape_to_string(loss.shape()));
  }
  if (!loss.requires_grad()) return;

  // Post-order DFS gives a topological order; each node is expanded once.
  std::vector<TensorImpl*> order;
  std::unordered_set<TensorImpl*> seen;
  std::vector<std::pair<TensorImpl*, std::size_t>> stack;
  stack.emplace_back(loss.impl_.get(), 0);
  seen.insert(loss.impl_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    const auto& fn = node->grad_fn;
    if (fn && next < fn->inputs.size()) {
      TensorImpl* child = fn->inputs[next++].impl_.get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
      continue;
    }
    order.push_back(node);
    stack.pop_back();
  }

  // Interior gradients are recomputed from scratch on every sweep.
  for (TensorImpl* node : order) {
    if (node->grad_fn) node->grad.reset();
  }
  auto& root = *loss.impl_;
  if (!root.grad) root.grad.emplace(1, 0.0);
  (*root.grad)[0] += 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl* node = *it;
    if (!node->grad_fn || !node->grad) continue;
    node->grad_fn->propagate(*node->grad);
  }
}

}  // namespace wrs

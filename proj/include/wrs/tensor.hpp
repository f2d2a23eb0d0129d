#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wrs/errors.hpp"

namespace wrs {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

class Tensor;
struct TensorImpl;

// One recorded operation. `propagate` receives the output gradient and adds
// its contribution into the gradients of `inputs`.
struct GradNode {
  std::vector<Tensor> inputs;
  std::function<void(std::span<const double>)> propagate;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::optional<std::vector<double>> grad;
  bool requires_grad = false;
  std::shared_ptr<GradNode> grad_fn;
};

/// Dense row-major n-d array of doubles with an optional gradient slot.
///
/// Copies share storage (handle semantics), so a parameter held by a network
/// and the leaf used in a forward pass are the same object. Results of
/// differentiable ops remember how they were produced; `backward` walks that
/// record in reverse.
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  const Shape& shape() const { return impl_->shape; }
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t numel() const { return impl_->data.size(); }

  std::span<const double> data() const { return impl_->data; }
  // Writable view; only leaves (tensors without a recorded producer) may be
  // modified in place.
  std::span<double> mutable_data();
  double item() const;
  double operator[](std::size_t i) const { return impl_->data[i]; }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool value);
  bool has_grad() const { return impl_->grad.has_value(); }
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();
  void clear_grad() { impl_->grad.reset(); }

  bool is_leaf() const { return impl_->grad_fn == nullptr; }
  const std::shared_ptr<GradNode>& grad_fn() const { return impl_->grad_fn; }

  // Same values, no history.
  Tensor detach() const;
  Tensor clone() const;

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  friend Tensor make_result(Shape, std::vector<double>, std::vector<Tensor>,
                            std::function<void(std::span<const double>)>);
  friend void backward(const Tensor& loss);
  friend void accumulate_grad(const Tensor& target, std::span<const double> delta);

  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

  std::shared_ptr<TensorImpl> impl_;
};

/// While alive on this thread, op results record no history.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// Builds an op result. The node is recorded only when some input requires a
// gradient; `propagate` is dropped otherwise.
Tensor make_result(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                   std::function<void(std::span<const double>)> propagate);

// Adds `delta` into target's grad, allocating a zero buffer on first use.
// No-op for tensors that do not require a gradient.
void accumulate_grad(const Tensor& target, std::span<const double> delta);

/// Reverse-mode sweep from a scalar. Every reachable tensor that requires a
/// gradient receives d(loss)/d(tensor), accumulated with `+=` across fan-out.
void backward(const Tensor& loss);

}  // namespace wrs

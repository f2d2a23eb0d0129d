#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "wrs/ops.hpp"
#include "wrs/tensor.hpp"

namespace wrs {

enum class Mode { train, eval };

/// Train-mode batch norm on fewer than two values per channel.
class BatchSizeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Running statistics that can no longer be valid (negative variance).
class CorruptionError : public StateError {
 public:
  using StateError::StateError;
};

enum class LayerKind { dense, conv2d, batchnorm, relu, maxpool, flatten, ws_dense, ws_conv2d };

std::string_view to_string(LayerKind kind);
LayerKind parse_layer_kind(std::string_view name);

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::size_t units = 0;  // output features (dense) or output channels (conv)
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t window = 2;  // maxpool
};

/// Per-sample input shape plus an ordered layer list. The final layer must be
/// a plain dense layer: it is the classifier head.
struct ArchitectureSpec {
  Shape input;
  std::vector<LayerSpec> layers;

  // widths = {in, hidden..., classes}; every hidden layer is dense-BN-ReLU.
  static ArchitectureSpec bn_mlp(const std::vector<std::size_t>& widths);
  // Blocks of conv(k=3, pad=1)-BN-ReLU-maxpool(2), then the dense head.
  static ArchitectureSpec bn_cnn(const Shape& input, const std::vector<std::size_t>& channels, std::size_t classes);
  // "bn-mlp:784-256-256-10" or "bn-cnn:1x28x28:16-16:10".
  static ArchitectureSpec parse(std::string_view text);
};

struct BatchNormConfig {
  double momentum = 0.1;
  double epsilon = 1e-5;
};

struct BatchNormState {
  Tensor gamma;
  Tensor beta;
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.1;
  double epsilon = 1e-5;

  static BatchNormState identity(std::size_t channels, const BatchNormConfig& config = {});
  std::size_t channels() const { return running_mean.size(); }
};

// Batch norm over channel axis 1. Train mode normalizes with the batch's
// biased moments and folds them into the running statistics; eval mode uses
// the running statistics.
Tensor batchnorm_forward(const Tensor& pre_activation, BatchNormState& state, Mode mode);

struct LinearSettings {
  std::size_t stride = 1;
  std::size_t padding = 0;
  bool standardize = false;
};

// relu(BN(linear(h))): matmul for a rank-2 weight, conv2d for rank 4.
Tensor bn_layer_forward(const Tensor& h, const Tensor& weight, BatchNormState& state, Mode mode,
                        const LinearSettings& linear = {});

enum class ParamRole { hidden_weight, output_weight, bn_gamma, bn_beta };

std::string_view to_string(ParamRole role);

struct Parameter {
  std::string name;
  Tensor value;  // shares storage with the owning layer
  ParamRole role = ParamRole::hidden_weight;
  bool scale_invariant = false;
  std::size_t layer = 0;

  bool is_weight() const { return role == ParamRole::hidden_weight || role == ParamRole::output_weight; }
  bool is_batchnorm() const { return role == ParamRole::bn_gamma || role == ParamRole::bn_beta; }
  // Number of per-output slices (last axis) for weights, 1 for BN vectors.
  std::size_t slice_count() const { return is_weight() ? value.shape().back() : 1; }
};

struct LayerNode {
  LayerSpec spec;
  Shape output_shape;  // per-sample
  std::optional<Tensor> weight;
  std::optional<BatchNormState> bn;
  // True iff a batch norm consumes this layer's linear output directly.
  bool scale_invariant = false;
  bool is_output = false;

  bool has_weight() const { return weight.has_value(); }
  bool is_conv() const { return spec.kind == LayerKind::conv2d || spec.kind == LayerKind::ws_conv2d; }
};

struct ForwardTrace {
  Tensor logits;
  // Input to every weight layer, indexed like Network::layers(); entries
  // for layers without weights are empty.
  std::vector<std::optional<Tensor>> weight_inputs;
  // Output of every layer.
  std::vector<Tensor> outputs;
};

/// A BN-DNN: hidden layers of weight multiplication, batch norm and ReLU,
/// followed by one dense output layer. Parameters are shared handles, so the
/// network is move-only; use clone() for an independent copy.
class Network {
 public:
  static Network build(const ArchitectureSpec& spec, std::uint64_t seed, const BatchNormConfig& bn = {});

  Network(Network&&) = default;
  Network& operator=(Network&&) = default;
  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;

  Network clone() const;

  Tensor forward(const Tensor& batch, Mode mode);
  ForwardTrace forward_trace(const Tensor& batch, Mode mode);

  const ArchitectureSpec& spec() const { return spec_; }
  std::vector<LayerNode>& layers() { return layers_; }
  const std::vector<LayerNode>& layers() const { return layers_; }
  std::size_t output_layer() const { return output_layer_; }
  std::size_t classes() const;

  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  const Parameter& parameter(std::string_view name) const;

  // Indices into layers() of layers carrying a weight.
  std::vector<std::size_t> weight_layers() const;
  // Weight layers other than the output layer, in order.
  std::vector<std::size_t> hidden_weight_layers() const;

  void zero_grad();
  void set_batchnorm_epsilon(double epsilon);

 private:
  Network() = default;
  void collect_parameters();

  ArchitectureSpec spec_;
  std::vector<LayerNode> layers_;
  std::vector<Parameter> params_;
  std::size_t output_layer_ = 0;
};

}  // namespace wrs

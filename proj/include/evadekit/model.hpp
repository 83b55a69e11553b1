#pragma once

#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include "evadekit/losses.hpp"
#include "evadekit/tensor.hpp"

namespace evadekit {

// y_j = b_j + sum_i x_i * weights[i * out + j]
struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weights;
  std::vector<double> bias;

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

// Valid (unpadded) convolution over H x W x C inputs. weights are laid out
// [ky][kx][cin][cout].
struct Conv2dLayer {
  std::size_t kh = 0;
  std::size_t kw = 0;
  std::size_t cin = 0;
  std::size_t cout = 0;
  std::size_t stride = 1;
  std::vector<double> weights;
  std::vector<double> bias;

  friend bool operator==(const Conv2dLayer&, const Conv2dLayer&) = default;
};

struct ReluLayer {
  friend bool operator==(const ReluLayer&, const ReluLayer&) = default;
};

struct FlattenLayer {
  friend bool operator==(const FlattenLayer&, const FlattenLayer&) = default;
};

using Layer = std::variant<DenseLayer, Conv2dLayer, ReluLayer, FlattenLayer>;

struct LayerGrad {
  std::vector<double> weights;
  std::vector<double> bias;
};
using ParamGrads = std::vector<LayerGrad>;

// Activations recorded by a forward pass; inputs[i] is the input of layer i
// and inputs.back() the logits.
struct ForwardTrace {
  std::vector<std::vector<double>> inputs;

  std::span<const double> logits() const { return inputs.back(); }
};

// Feed-forward classifier. Immutable once built; forward and backward are
// const and safe to call concurrently.
class Model {
 public:
  Model(Shape input_shape, std::vector<Layer> layers, std::size_t num_classes);

  const Shape& input_shape() const { return input_shape_; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::size_t num_classes() const { return num_classes_; }
  // Output shape of layer i; output_shape(layers().size() - 1) == {K}.
  const Shape& output_shape(std::size_t i) const { return shapes_[i + 1]; }

  // Raw logits N x K for a batch N x input_shape.
  Tensor forward(const Tensor& batch) const;
  // Logits for a single sample shaped like input_shape.
  std::vector<double> logits(const Tensor& x) const;
  std::size_t predict(const Tensor& x) const;

  ForwardTrace trace(std::span<const double> x) const;
  // Reverse pass from dL/dlogits. Returns dL/dinput; accumulates parameter
  // gradients into *param_grads when given (see zero_grads).
  std::vector<double> backward(const ForwardTrace& trace, std::span<const double> grad_logits,
                               ParamGrads* param_grads = nullptr) const;
  ParamGrads zero_grads() const;

  // Mutable parameter access for training.
  std::vector<Layer>& mutable_layers() { return layers_; }

  friend bool operator==(const Model& a, const Model& b) {
    return a.input_shape_ == b.input_shape_ && a.num_classes_ == b.num_classes_ &&
           a.layers_ == b.layers_;
  }

 private:
  void check_sample(const Tensor& x) const;

  Shape input_shape_;
  std::vector<Layer> layers_;
  std::size_t num_classes_;
  std::vector<Shape> shapes_;
};

struct InputGradient {
  double loss = 0.0;
  std::vector<double> logits;
  Tensor grad;  // dL/dx, same shape as x
};

// Exact reverse-mode gradient of a scalar loss over the logits w.r.t. the input.
InputGradient input_gradient(const Model& model, const LossSpec& loss, const Tensor& x);

// He-style uniform init: U(-sqrt(6 / fan_in), sqrt(6 / fan_in)), zero bias.
Model make_cnn(const Shape& input_hwc, std::size_t num_classes, std::size_t conv1_channels,
               std::size_t conv2_channels, std::size_t hidden, std::uint64_t seed);
Model make_mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden,
               std::size_t num_classes, std::uint64_t seed);
Model make_mlp_for(const Shape& input_shape, const std::vector<std::size_t>& hidden,
                   std::size_t num_classes, std::uint64_t seed);

}  // namespace evadekit

#include "evadekit/model.hpp"

#include <cmath>
#include <string>

#include "evadekit/error.hpp"
#include "evadekit/rng.hpp"

namespace evadekit {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::string layer_label(std::size_t i) { return "layer " + std::to_string(i); }

Shape infer_output(const Layer& layer, const Shape& in, std::size_t index) {
  return std::visit(
      overloaded{
          [&](const DenseLayer& d) -> Shape {
            if (in.size() != 1 || in[0] != d.in) {
              throw ShapeError(layer_label(index) + " (dense " + std::to_string(d.in) + "x" +
                               std::to_string(d.out) + ") cannot take input " + shape_string(in));
            }
            if (d.weights.size() != d.in * d.out || d.bias.size() != d.out) {
              throw ShapeError(layer_label(index) + ": dense parameter buffers have wrong size");
            }
            return {d.out};
          },
          [&](const Conv2dLayer& c) -> Shape {
            if (in.size() != 3 || in[2] != c.cin || in[0] < c.kh || in[1] < c.kw || c.stride == 0) {
              throw ShapeError(layer_label(index) + " (conv2d " + std::to_string(c.kh) + "x" +
                               std::to_string(c.kw) + "x" + std::to_string(c.cin) + "x" +
                               std::to_string(c.cout) + ") cannot take input " + shape_string(in));
            }
            if (c.weights.size() != c.kh * c.kw * c.cin * c.cout || c.bias.size() != c.cout) {
              throw ShapeError(layer_label(index) + ": conv2d parameter buffers have wrong size");
            }
            return {(in[0] - c.kh) / c.stride + 1, (in[1] - c.kw) / c.stride + 1, c.cout};
          },
          [&](const ReluLayer&) -> Shape { return in; },
          [&](const FlattenLayer&) -> Shape { return {shape_size(in)}; },
      },
      layer);
}

void dense_forward(const DenseLayer& d, const double* x, double* y) {
  for (std::size_t j = 0; j < d.out; ++j) y[j] = d.bias[j];
  for (std::size_t i = 0; i < d.in; ++i) {
    const double xi = x[i];
    const double* row = d.weights.data() + i * d.out;
    for (std::size_t j = 0; j < d.out; ++j) y[j] += xi * row[j];
  }
}

void conv_forward(const Conv2dLayer& c, const Shape& in, const Shape& out, const double* x,
                  double* y) {
  const std::size_t w_in = in[1];
  for (std::size_t oy = 0; oy < out[0]; ++oy) {
    for (std::size_t ox = 0; ox < out[1]; ++ox) {
      double* acc = y + (oy * out[1] + ox) * c.cout;
      for (std::size_t co = 0; co < c.cout; ++co) acc[co] = c.bias[co];
      for (std::size_t ky = 0; ky < c.kh; ++ky) {
        for (std::size_t kx = 0; kx < c.kw; ++kx) {
          const double* px = x + ((oy * c.stride + ky) * w_in + (ox * c.stride + kx)) * c.cin;
          const double* wk = c.weights.data() + (ky * c.kw + kx) * c.cin * c.cout;
          for (std::size_t ci = 0; ci < c.cin; ++ci) {
            const double v = px[ci];
            const double* wrow = wk + ci * c.cout;
            for (std::size_t co = 0; co < c.cout; ++co) acc[co] += v * wrow[co];
          }
        }
      }
    }
  }
}

void conv_backward(const Conv2dLayer& c, const Shape& in, const Shape& out, const double* x,
                   const double* gy, double* gx, LayerGrad* pg) {
  const std::size_t w_in = in[1];
  for (std::size_t oy = 0; oy < out[0]; ++oy) {
    for (std::size_t ox = 0; ox < out[1]; ++ox) {
      const double* g = gy + (oy * out[1] + ox) * c.cout;
      if (pg) {
        for (std::size_t co = 0; co < c.cout; ++co) pg->bias[co] += g[co];
      }
      for (std::size_t ky = 0; ky < c.kh; ++ky) {
        for (std::size_t kx = 0; kx < c.kw; ++kx) {
          const std::size_t off = ((oy * c.stride + ky) * w_in + (ox * c.stride + kx)) * c.cin;
          const double* wk = c.weights.data() + (ky * c.kw + kx) * c.cin * c.cout;
          for (std::size_t ci = 0; ci < c.cin; ++ci) {
            const double* wrow = wk + ci * c.cout;
            double s = 0.0;
            for (std::size_t co = 0; co < c.cout; ++co) s += wrow[co] * g[co];
            gx[off + ci] += s;
            if (pg) {
              double* gw = pg->weights.data() + (ky * c.kw + kx) * c.cin * c.cout + ci * c.cout;
              const double v = x[off + ci];
              for (std::size_t co = 0; co < c.cout; ++co) gw[co] += v * g[co];
            }
          }
        }
      }
    }
  }
}

void he_uniform(std::vector<double>& w, std::size_t fan_in, CounterRng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (double& v : w) v = rng.uniform(-limit, limit);
}

DenseLayer init_dense(std::size_t in, std::size_t out, CounterRng& rng) {
  DenseLayer d{in, out, std::vector<double>(in * out), std::vector<double>(out, 0.0)};
  he_uniform(d.weights, in, rng);
  return d;
}

Conv2dLayer init_conv(std::size_t k, std::size_t cin, std::size_t cout, std::size_t stride,
                      CounterRng& rng) {
  Conv2dLayer c{k, k, cin, cout, stride, std::vector<double>(k * k * cin * cout),
                std::vector<double>(cout, 0.0)};
  he_uniform(c.weights, k * k * cin, rng);
  return c;
}

}  // namespace

Model::Model(Shape input_shape, std::vector<Layer> layers, std::size_t num_classes)
    : input_shape_(std::move(input_shape)), layers_(std::move(layers)), num_classes_(num_classes) {
  if (num_classes_ == 0) throw ShapeError("model: num_classes must be positive");
  if (input_shape_.empty() || shape_size(input_shape_) == 0) {
    throw ShapeError("model: empty input shape");
  }
  shapes_.push_back(input_shape_);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    shapes_.push_back(infer_output(layers_[i], shapes_.back(), i));
  }
  if (shapes_.back() != Shape{num_classes_}) {
    throw ShapeError("model: final layer emits " + shape_string(shapes_.back()) + ", expected [" +
                     std::to_string(num_classes_) + "] logits");
  }
}

void Model::check_sample(const Tensor& x) const {
  if (x.shape() != input_shape_) {
    throw ShapeError("model input " + shape_string(x.shape()) + " does not match expected " +
                     shape_string(input_shape_));
  }
  require_finite(x, "model input");
}

ForwardTrace Model::trace(std::span<const double> x) const {
  ForwardTrace t;
  t.inputs.reserve(layers_.size() + 1);
  t.inputs.emplace_back(x.begin(), x.end());
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& in = t.inputs.back();
    std::vector<double> out(shape_size(shapes_[i + 1]));
    std::visit(overloaded{
                   [&](const DenseLayer& d) { dense_forward(d, in.data(), out.data()); },
                   [&](const Conv2dLayer& c) {
                     conv_forward(c, shapes_[i], shapes_[i + 1], in.data(), out.data());
                   },
                   [&](const ReluLayer&) {
                     for (std::size_t k = 0; k < in.size(); ++k) out[k] = in[k] > 0.0 ? in[k] : 0.0;
                   },
                   [&](const FlattenLayer&) { out = in; },
               },
               layers_[i]);
    t.inputs.push_back(std::move(out));
  }
  return t;
}

std::vector<double> Model::backward(const ForwardTrace& tr, std::span<const double> grad_logits,
                                    ParamGrads* param_grads) const {
  if (grad_logits.size() != num_classes_) {
    throw ShapeError("backward: expected " + std::to_string(num_classes_) + " logit gradients");
  }
  std::vector<double> g(grad_logits.begin(), grad_logits.end());
  for (std::size_t i = layers_.size(); i-- > 0;) {
    const auto& x = tr.inputs[i];
    std::vector<double> gx(x.size(), 0.0);
    LayerGrad* pg = param_grads ? &(*param_grads)[i] : nullptr;
    std::visit(overloaded{
                   [&](const DenseLayer& d) {
                     for (std::size_t r = 0; r < d.in; ++r) {
                       const double* row = d.weights.data() + r * d.out;
                       double s = 0.0;
                       for (std::size_t j = 0; j < d.out; ++j) s += row[j] * g[j];
                       gx[r] = s;
                     }
                     if (pg) {
                       for (std::size_t j = 0; j < d.out; ++j) pg->bias[j] += g[j];
                       for (std::size_t r = 0; r < d.in; ++r) {
                         double* gw = pg->weights.data() + r * d.out;
                         for (std::size_t j = 0; j < d.out; ++j) gw[j] += x[r] * g[j];
                       }
                     }
                   },
                   [&](const Conv2dLayer& c) {
                     conv_backward(c, shapes_[i], shapes_[i + 1], x.data(), g.data(), gx.data(), pg);
                   },
                   [&](const ReluLayer&) {
                     // zero subgradient at the kink
                     for (std::size_t k = 0; k < x.size(); ++k) gx[k] = x[k] > 0.0 ? g[k] : 0.0;
                   },
                   [&](const FlattenLayer&) { gx = g; },
               },
               layers_[i]);
    g = std::move(gx);
  }
  return g;
}

ParamGrads Model::zero_grads() const {
  ParamGrads grads(layers_.size());
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    std::visit(overloaded{
                   [&](const DenseLayer& d) {
                     grads[i].weights.assign(d.weights.size(), 0.0);
                     grads[i].bias.assign(d.bias.size(), 0.0);
                   },
                   [&](const Conv2dLayer& c) {
                     grads[i].weights.assign(c.weights.size(), 0.0);
                     grads[i].bias.assign(c.bias.size(), 0.0);
                   },
                   [](const auto&) {},
               },
               layers_[i]);
  }
  return grads;
}

Tensor Model::forward(const Tensor& batch) const {
  const Shape& s = batch.shape();
  if (s.size() != input_shape_.size() + 1 || !std::equal(input_shape_.begin(), input_shape_.end(), s.begin() + 1)) {
    throw ShapeError("forward: batch " + shape_string(s) + " does not match N x " +
                     shape_string(input_shape_));
  }
  require_finite(batch, "forward batch");
  const std::size_t n = s[0];
  const std::size_t d = shape_size(input_shape_);
  Tensor out({n, num_classes_});
  for (std::size_t i = 0; i < n; ++i) {
    const auto tr = trace(std::span<const double>(batch.data() + i * d, d));
    std::copy(tr.logits().begin(), tr.logits().end(), out.data() + i * num_classes_);
  }
  return out;
}

std::vector<double> Model::logits(const Tensor& x) const {
  check_sample(x);
  auto tr = trace(x.values());
  return std::move(tr.inputs.back());
}

std::size_t Model::predict(const Tensor& x) const { return argmax(logits(x)); }

InputGradient input_gradient(const Model& model, const LossSpec& loss, const Tensor& x) {
  if (x.shape() != model.input_shape()) {
    throw ShapeError("input_gradient: x " + shape_string(x.shape()) + " does not match " +
                     shape_string(model.input_shape()));
  }
  require_finite(x, "input_gradient");
  const auto tr = model.trace(x.values());
  const auto eval = loss_with_gradient(loss, tr.logits());
  auto g = model.backward(tr, eval.grad);
  return {eval.value, tr.inputs.back(), Tensor(x.shape(), std::move(g))};
}

Model make_cnn(const Shape& input_hwc, std::size_t num_classes, std::size_t conv1_channels,
               std::size_t conv2_channels, std::size_t hidden, std::uint64_t seed) {
  if (input_hwc.size() != 3) throw ShapeError("make_cnn: input must be H x W x C");
  CounterRng rng(CounterRng::derive(seed, 0xC0));
  std::vector<Layer> layers;
  layers.emplace_back(init_conv(3, input_hwc[2], conv1_channels, 1, rng));
  layers.emplace_back(ReluLayer{});
  layers.emplace_back(init_conv(3, conv1_channels, conv2_channels, 2, rng));
  layers.emplace_back(ReluLayer{});
  layers.emplace_back(FlattenLayer{});
  const std::size_t h1 = input_hwc[0] - 2, w1 = input_hwc[1] - 2;
  const std::size_t h2 = (h1 - 3) / 2 + 1, w2 = (w1 - 3) / 2 + 1;
  layers.emplace_back(init_dense(h2 * w2 * conv2_channels, hidden, rng));
  layers.emplace_back(ReluLayer{});
  layers.emplace_back(init_dense(hidden, num_classes, rng));
  return Model(input_hwc, std::move(layers), num_classes);
}

Model make_mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden,
               std::size_t num_classes, std::uint64_t seed) {
  return make_mlp_for({input_dim}, hidden, num_classes, seed);
}

Model make_mlp_for(const Shape& input_shape, const std::vector<std::size_t>& hidden,
                   std::size_t num_classes, std::uint64_t seed) {
  CounterRng rng(CounterRng::derive(seed, 0x31));
  std::vector<Layer> layers;
  if (input_shape.size() > 1) layers.emplace_back(FlattenLayer{});
  std::size_t width = shape_size(input_shape);
  for (std::size_t h : hidden) {
    layers.emplace_back(init_dense(width, h, rng));
    layers.emplace_back(ReluLayer{});
    width = h;
  }
  layers.emplace_back(init_dense(width, num_classes, rng));
  return Model(input_shape, std::move(layers), num_classes);
}

}  // namespace evadekit

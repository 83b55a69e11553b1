#pragma once

// Test-only reference implementations. Written independently of the
// library code paths they check: plain loops, naive softmax, brute force.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include "evadekit/losses.hpp"
#include "evadekit/model.hpp"
#include "evadekit/rng.hpp"

namespace oracle {

using evadekit::Model;

struct Eval {
  std::vector<double> logits;
  std::vector<double> pre_relu;  // every value fed into a ReLU
};

inline Eval forward(const Model& model, const std::vector<double>& input) {
  Eval ev;
  std::vector<double> a = input;
  std::vector<std::size_t> hwc = model.input_shape();
  for (const auto& layer : model.layers()) {
    if (const auto* d = std::get_if<evadekit::DenseLayer>(&layer)) {
      std::vector<double> out(d->out);
      for (std::size_t j = 0; j < d->out; ++j) {
        double s = d->bias[j];
        for (std::size_t i = 0; i < d->in; ++i) s += a[i] * d->weights[i * d->out + j];
        out[j] = s;
      }
      a = out;
      hwc = {d->out};
    } else if (const auto* c = std::get_if<evadekit::Conv2dLayer>(&layer)) {
      const std::size_t h = hwc[0], w = hwc[1], cin = hwc[2];
      const std::size_t oh = (h - c->kh) / c->stride + 1, ow = (w - c->kw) / c->stride + 1;
      std::vector<double> out(oh * ow * c->cout);
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox)
          for (std::size_t co = 0; co < c->cout; ++co) {
            double s = c->bias[co];
            for (std::size_t ky = 0; ky < c->kh; ++ky)
              for (std::size_t kx = 0; kx < c->kw; ++kx)
                for (std::size_t ci = 0; ci < cin; ++ci) {
                  const std::size_t iy = oy * c->stride + ky, ix = ox * c->stride + kx;
                  s += a[(iy * w + ix) * cin + ci] *
                       c->weights[((ky * c->kw + kx) * c->cin + ci) * c->cout + co];
                }
            out[(oy * ow + ox) * c->cout + co] = s;
          }
      a = out;
      hwc = {oh, ow, c->cout};
    } else if (std::holds_alternative<evadekit::ReluLayer>(layer)) {
      for (double& v : a) {
        ev.pre_relu.push_back(v);
        v = v > 0 ? v : 0;
      }
    } else {
      hwc = {a.size()};
    }
  }
  ev.logits = a;
  return ev;
}

inline double ce(const std::vector<double>& z, std::size_t y) {
  double denom = 0;
  for (double v : z) denom += std::exp(v);
  return -std::log(std::exp(z[y]) / denom);
}

inline double max_other(const std::vector<double>& z, std::size_t skip) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < z.size(); ++i)
    if (i != skip) m = std::max(m, z[i]);
  return m;
}

inline std::vector<double> sorted_desc(std::vector<double> z) {
  std::sort(z.begin(), z.end(), std::greater<>());
  return z;
}

inline double relu(double v) { return v > 0 ? v : 0; }

inline double loss(const evadekit::LossSpec& s, const std::vector<double>& z) {
  using evadekit::LossId;
  switch (s.id) {
    case LossId::ce: return ce(z, s.cls);
    case LossId::cw: return -z[s.cls] + max_other(z, s.cls);
    case LossId::dlr: {
      const auto p = sorted_desc(z);
      return (z[s.cls] - z[s.label]) / (p[0] - 0.5 * p[2] - 0.5 * p[3]);
    }
    case LossId::md: {
      double t = 0;
      for (double v : z) t += relu(v + s.delta - z[s.cls]);
      return t;
    }
    case LossId::cw_star: return relu(z[s.cls] + s.delta - max_other(z, s.cls));
    case LossId::dlr_untargeted: {
      const auto p = sorted_desc(z);
      return (z[s.cls] - max_other(z, s.cls)) / (p[0] - p[2]);
    }
  }
  return 0;
}

// Order of logits (descending, stable by index); compares kink-relevant
// structure between two evaluations.
inline std::vector<std::size_t> order(const std::vector<double>& z) {
  std::vector<std::size_t> o(z.size());
  std::iota(o.begin(), o.end(), 0);
  std::stable_sort(o.begin(), o.end(), [&](std::size_t a, std::size_t b) { return z[a] > z[b]; });
  return o;
}

inline bool same_structure(const Eval& a, const Eval& b, double margin) {
  for (std::size_t i = 0; i < a.pre_relu.size(); ++i) {
    if ((a.pre_relu[i] > 0) != (b.pre_relu[i] > 0)) return false;
    if (std::fabs(a.pre_relu[i]) < margin) return false;
  }
  if (order(a.logits) != order(b.logits)) return false;
  const auto o = order(a.logits);
  for (std::size_t i = 0; i + 1 < o.size(); ++i)
    if (std::fabs(a.logits[o[i]] - a.logits[o[i + 1]]) < margin) return false;
  return true;
}

struct FdResult {
  double rel_error = 0;
  std::size_t checked = 0;
};

// Central differences of the oracle loss; coordinates whose stencil crosses
// a kink (ReLU sign, logit order, hinge activation) are skipped.
inline FdResult compare_gradient(const Model& model, const evadekit::LossSpec& spec,
                                 const std::vector<double>& x, const std::vector<double>& grad,
                                 double h = 1e-4) {
  const auto base = forward(model, x);
  double worst = 0, scale = 1e-8;
  FdResult r;
  for (std::size_t i = 0; i < x.size(); ++i) {
    auto up = x, down = x;
    up[i] += h;
    down[i] -= h;
    const auto eu = forward(model, up), ed = forward(model, down);
    if (!same_structure(base, eu, 1e-6) || !same_structure(base, ed, 1e-6)) continue;
    // hinge terms of md / cw_star must not switch across the stencil
    if (spec.id == evadekit::LossId::md || spec.id == evadekit::LossId::cw_star) {
      auto active = [&](const std::vector<double>& z) {
        std::vector<bool> act;
        if (spec.id == evadekit::LossId::md)
          for (double v : z) act.push_back(v + spec.delta - z[spec.cls] > 0);
        else
          act.push_back(z[spec.cls] + spec.delta - max_other(z, spec.cls) > 0);
        return act;
      };
      if (active(eu.logits) != active(base.logits) || active(ed.logits) != active(base.logits)) continue;
    }
    const double fd = (loss(spec, eu.logits) - loss(spec, ed.logits)) / (2 * h);
    worst = std::max(worst, std::fabs(fd - grad[i]));
    scale = std::max(scale, std::fabs(fd));
    ++r.checked;
  }
  r.rel_error = worst / scale;
  return r;
}

// Random network with every layer type, weights drawn from U(-1, 1).
inline Model random_cnn(std::uint64_t seed, std::size_t k) {
  evadekit::CounterRng rng(seed);
  auto fill = [&](std::size_t n, double s) {
    std::vector<double> v(n);
    for (double& e : v) e = rng.uniform(-s, s);
    return v;
  };
  std::vector<evadekit::Layer> layers;
  evadekit::Conv2dLayer c{2, 2, 2, 3, 1, fill(2 * 2 * 2 * 3, 0.7), fill(3, 0.2)};
  evadekit::Conv2dLayer c2{2, 2, 3, 2, 2, fill(2 * 2 * 3 * 2, 0.7), fill(2, 0.2)};
  layers.push_back(c);
  layers.push_back(evadekit::ReluLayer{});
  layers.push_back(c2);
  layers.push_back(evadekit::ReluLayer{});
  layers.push_back(evadekit::FlattenLayer{});
  evadekit::DenseLayer d{8, k, fill(8 * k, 0.9), fill(k, 0.3)};
  layers.push_back(d);
  return Model({5, 5, 2}, layers, k);
}

inline Model random_mlp(std::uint64_t seed, std::size_t in, std::size_t hidden, std::size_t k) {
  evadekit::CounterRng rng(seed);
  auto fill = [&](std::size_t n, double s) {
    std::vector<double> v(n);
    for (double& e : v) e = rng.uniform(-s, s);
    return v;
  };
  std::vector<evadekit::Layer> layers;
  layers.push_back(evadekit::DenseLayer{in, hidden, fill(in * hidden, 1.0), fill(hidden, 0.3)});
  layers.push_back(evadekit::ReluLayer{});
  layers.push_back(evadekit::DenseLayer{hidden, k, fill(hidden * k, 1.0), fill(k, 0.3)});
  return Model({in}, layers, k);
}

}  // namespace oracle

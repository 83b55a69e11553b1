#pragma once

#include <cstdint>

#include "evadekit/tensor.hpp"

namespace evadekit {

struct AdamConfig {
  double alpha = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_num = 1e-8;
};

struct AdamState {
  Tensor m;
  Tensor v;
  std::uint64_t t = 0;
  AdamConfig config;

  static AdamState zeros(const Shape& shape, AdamConfig config = {}) {
    return {Tensor(shape), Tensor(shape), 0, config};
  }
};

struct AdamStep {
  AdamState state;
  Tensor update;  // subtract from the variable
};

// Bias-corrected Adam step: t += 1, then
// update = alpha * m_hat / (sqrt(v_hat) + eps_num).
AdamStep adam_step(const AdamState& state, const Tensor& grad);

// In-place variant for hot loops; writes the update into `update`.
void adam_step_inplace(AdamState& state, std::span<const double> grad, std::span<double> update);

}  // namespace evadekit

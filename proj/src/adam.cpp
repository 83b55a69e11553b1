#include "evadekit/adam.hpp"

#include <cmath>

#include "evadekit/error.hpp"

namespace evadekit {

void adam_step_inplace(AdamState& s, std::span<const double> grad, std::span<double> update) {
  if (grad.size() != s.m.size() || update.size() != s.m.size()) {
    throw ShapeError("adam_step: gradient has " + std::to_string(grad.size()) +
                     " elements, state has " + std::to_string(s.m.size()));
  }
  const auto& c = s.config;
  s.t += 1;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(s.t));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(s.t));
  for (std::size_t i = 0; i < grad.size(); ++i) {
    const double g = grad[i];
    s.m[i] = c.beta1 * s.m[i] + (1.0 - c.beta1) * g;
    s.v[i] = c.beta2 * s.v[i] + (1.0 - c.beta2) * g * g;
    const double m_hat = s.m[i] / bc1;
    const double v_hat = s.v[i] / bc2;
    update[i] = c.alpha * m_hat / (std::sqrt(v_hat) + c.eps_num);
  }
}

AdamStep adam_step(const AdamState& state, const Tensor& grad) {
  require_same_shape(state.m, grad, "adam_step");
  AdamStep out{state, Tensor(grad.shape())};
  adam_step_inplace(out.state, grad.values(), out.update.values());
  return out;
}

}  // namespace evadekit

#include "evadekit/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "evadekit/error.hpp"

namespace evadekit {

namespace {

constexpr double kLevels = 255.0;

double sign_of(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace

EpsilonBall::EpsilonBall(const Tensor& source, double epsilon)
    : source_(source), epsilon_(epsilon), upper_(source.shape()), lower_(source.shape()) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) {
    throw DomainError("epsilon_ball: epsilon " + std::to_string(epsilon) + " outside [0, 1]");
  }
  for (std::size_t i = 0; i < source.size(); ++i) {
    const double v = source[i];
    if (!(v >= 0.0 && v <= 1.0)) {
      throw DomainError("epsilon_ball: source element " + std::to_string(i) + " = " +
                        std::to_string(v) + " outside [0, 1]");
    }
    upper_[i] = std::min(v + epsilon, 1.0);
    lower_[i] = std::max(v - epsilon, 0.0);
  }
}

Tensor clip_to_ball(const Tensor& xp, const EpsilonBall& ball) {
  require_same_shape(xp, ball.source(), "clip_to_ball");
  Tensor out = xp;
  const auto& hi = ball.upper();
  const auto& lo = ball.lower();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(out[i], lo[i], hi[i]);
  return out;
}

Tensor overrun(const Tensor& xp, const EpsilonBall& ball) {
  require_same_shape(xp, ball.source(), "overrun");
  Tensor out(xp.shape());
  const auto& hi = ball.upper();
  const auto& lo = ball.lower();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::max(xp[i] - hi[i], 0.0) + std::max(lo[i] - xp[i], 0.0);
  }
  return out;
}

double max_overrun(const Tensor& xp, const EpsilonBall& ball) {
  require_same_shape(xp, ball.source(), "max_overrun");
  double m = 0.0;
  const auto& hi = ball.upper();
  const auto& lo = ball.lower();
  for (std::size_t i = 0; i < xp.size(); ++i) {
    m = std::max(m, std::max(xp[i] - hi[i], 0.0) + std::max(lo[i] - xp[i], 0.0));
  }
  return m;
}

Tensor quantize_round(const Tensor& xp) {
  require_finite(xp, "quantize_round");
  Tensor out(xp.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::round(xp[i] * kLevels) / kLevels;
  return out;
}

Tensor quantize_grad_aligned(const Tensor& xp, const Tensor& direction) {
  require_same_shape(xp, direction, "quantize_grad_aligned");
  require_finite(xp, "quantize_grad_aligned");
  Tensor out(xp.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::round(xp[i] * kLevels + sign_of(direction[i]) * 0.499999) / kLevels;
  }
  return out;
}

bool is_on_grid(const Tensor& x, QuantRule rule) {
  const double levels = rule.levels;
  for (double v : x.values()) {
    if (!(v >= 0.0 && v <= 1.0)) return false;
    const double nearest = std::round(v * levels) / levels;
    if (std::abs(v - nearest) > 1e-9) return false;
  }
  return true;
}

bool is_grid_aligned(double eps, QuantRule rule) {
  const double levels = rule.levels;
  return std::abs(eps - std::round(eps * levels) / levels) <= 1e-9;
}

double linf_distance(const Tensor& a, const Tensor& b) { return max_abs_diff(a, b); }

}  // namespace evadekit

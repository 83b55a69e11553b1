#pragma once

#include "evadekit/tensor.hpp"

namespace evadekit {

// L-infinity ball around a source image, intersected with [0, 1].
// upper = min(x + eps, 1), lower = max(x - eps, 0); fixed once built.
class EpsilonBall {
 public:
  EpsilonBall(const Tensor& source, double epsilon);

  const Tensor& source() const { return source_; }
  double epsilon() const { return epsilon_; }
  const Tensor& upper() const { return upper_; }
  const Tensor& lower() const { return lower_; }
  const Shape& shape() const { return source_.shape(); }

 private:
  Tensor source_;
  double epsilon_;
  Tensor upper_;
  Tensor lower_;
};

struct QuantRule {
  int levels = 255;
};

inline EpsilonBall epsilon_ball(const Tensor& x, double eps) { return EpsilonBall(x, eps); }

Tensor clip_to_ball(const Tensor& xp, const EpsilonBall& ball);

// ReLU(xp - U) + ReLU(L - xp), elementwise.
Tensor overrun(const Tensor& xp, const EpsilonBall& ball);
double max_overrun(const Tensor& xp, const EpsilonBall& ball);

// round(xp * 255) / 255 with ties away from zero.
Tensor quantize_round(const Tensor& xp);

// round(xp * 255 + sign(direction) * 0.499999) / 255.
Tensor quantize_grad_aligned(const Tensor& xp, const Tensor& direction);

bool is_on_grid(const Tensor& x, QuantRule rule = {});

// True when eps sits on the 1/255 grid (within 1e-9).
bool is_grid_aligned(double eps, QuantRule rule = {});

double linf_distance(const Tensor& a, const Tensor& b);

}  // namespace evadekit

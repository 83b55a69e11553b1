#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "evadekit/geometry.hpp"
#include "evadekit/tensor.hpp"

namespace evadekit {

// All losses are evaluated in double precision over a logit vector Z.

enum class LossId { ce, cw, dlr, md, cw_star, dlr_untargeted };

// Config identifiers: "ce", "cw", "dlr", "md", "cw_star", "dlr_untargeted".
LossId parse_loss_id(std::string_view name);
std::string_view loss_name(LossId id);

inline constexpr double kDefaultDelta = 1e-15;

// -Z_y + log(sum_j exp(Z_j)), via log-sum-exp.
double ce_loss(std::span<const double> logits, std::size_t y);
// -Z_t + max_{i != t} Z_i
double cw_loss(std::span<const double> logits, std::size_t t);
// (Z_t - Z_y) / (Z_pi1 - 0.5 Z_pi3 - 0.5 Z_pi4), pi = descending order,
// ties broken by ascending class index.
double dlr_targeted_loss(std::span<const double> logits, std::size_t t, std::size_t y);
// sum_i ReLU(Z_i + delta - Z_t), the i == t term included.
double md_loss(std::span<const double> logits, std::size_t t, double delta = kDefaultDelta);
// ReLU(Z_y + delta - max_{i != y} Z_i)
double cw_star_loss(std::span<const double> logits, std::size_t y, double delta = kDefaultDelta);
// (Z_y - max_{i != y} Z_i) / (Z_pi1 - Z_pi3)
double dlr_untargeted_loss(std::span<const double> logits, std::size_t y);

// sum of squared overrun.
double boundary_loss(const Tensor& xp, const EpsilonBall& ball);
// d(boundary_loss)/d(xp) = 2 * (ReLU(xp - U) - ReLU(L - xp)).
Tensor boundary_loss_gradient(const Tensor& xp, const EpsilonBall& ball);

struct LossValue {
  double value = 0.0;
  // (L_cls, L_bnd) for combined losses.
  std::optional<std::pair<double, double>> components;
};

// w * l_cls + (1 - w) * l_bnd, w in [0, 1].
LossValue combined_loss(double l_cls, double l_bnd, double w);

// A loss bound to its class arguments.
struct LossSpec {
  LossId id = LossId::ce;
  std::size_t cls = 0;    // scored class for ce; target for cw/dlr/md; label for cw_star/dlr_untargeted
  std::size_t label = 0;  // true label, dlr only
  double delta = kDefaultDelta;

  static LossSpec ce(std::size_t cls) { return {LossId::ce, cls, 0, kDefaultDelta}; }
  static LossSpec cw(std::size_t t) { return {LossId::cw, t, 0, kDefaultDelta}; }
  static LossSpec dlr(std::size_t t, std::size_t y) { return {LossId::dlr, t, y, kDefaultDelta}; }
  static LossSpec md(std::size_t t, double delta = kDefaultDelta) { return {LossId::md, t, 0, delta}; }
  static LossSpec cw_star(std::size_t y, double delta = kDefaultDelta) {
    return {LossId::cw_star, y, 0, delta};
  }
  static LossSpec dlr_untargeted(std::size_t y) { return {LossId::dlr_untargeted, y, 0, kDefaultDelta}; }
};

struct LossEval {
  double value = 0.0;
  std::vector<double> grad;  // dL/dZ
};

double loss_value(const LossSpec& spec, std::span<const double> logits);
// Value and exact gradient w.r.t. the logits. ReLU kinks take the zero
// subgradient; max/sort ties resolve to the lowest class index.
LossEval loss_with_gradient(const LossSpec& spec, std::span<const double> logits);

}  // namespace evadekit

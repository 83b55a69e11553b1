#include "evadekit/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "evadekit/error.hpp"

namespace evadekit {

namespace {

void check_class(std::span<const double> z, std::size_t c, const char* what) {
  if (c >= z.size()) {
    throw DomainError(std::string(what) + ": class index " + std::to_string(c) +
                      " out of range for K=" + std::to_string(z.size()));
  }
}

void check_k(std::span<const double> z, std::size_t min_k, const char* what) {
  if (z.size() < min_k) {
    throw DomainError(std::string(what) + ": needs K >= " + std::to_string(min_k) + ", got " +
                      std::to_string(z.size()));
  }
}

// Largest logit other than `skip`; lowest index on ties.
std::size_t runner_up(std::span<const double> z, std::size_t skip) {
  std::size_t best = z.size();
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (i == skip) continue;
    if (best == z.size() || z[i] > z[best]) best = i;
  }
  return best;
}

std::vector<std::size_t> descending_order(std::span<const double> z) {
  std::vector<std::size_t> order(z.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return z[a] > z[b]; });
  return order;
}

double log_sum_exp(std::span<const double> z) {
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - m);
  return m + std::log(s);
}

LossEval ce_eval(std::span<const double> z, std::size_t y) {
  check_class(z, y, "ce_loss");
  const double lse = log_sum_exp(z);
  LossEval out{lse - z[y], std::vector<double>(z.size())};
  for (std::size_t i = 0; i < z.size(); ++i) out.grad[i] = std::exp(z[i] - lse);
  out.grad[y] -= 1.0;
  return out;
}

LossEval cw_eval(std::span<const double> z, std::size_t t) {
  check_k(z, 2, "cw_loss");
  check_class(z, t, "cw_loss");
  const std::size_t r = runner_up(z, t);
  LossEval out{z[r] - z[t], std::vector<double>(z.size(), 0.0)};
  out.grad[r] += 1.0;
  out.grad[t] -= 1.0;
  return out;
}

LossEval dlr_eval(std::span<const double> z, std::size_t t, std::size_t y) {
  check_k(z, 4, "dlr_targeted_loss");
  check_class(z, t, "dlr_targeted_loss");
  check_class(z, y, "dlr_targeted_loss");
  if (t == y) throw DomainError("dlr_targeted_loss: target equals label");
  const auto pi = descending_order(z);
  const double num = z[t] - z[y];
  const double den = z[pi[0]] - 0.5 * z[pi[2]] - 0.5 * z[pi[3]];
  if (den == 0.0) throw DegenerateLogitsError("dlr_targeted_loss: zero denominator");
  LossEval out{num / den, std::vector<double>(z.size(), 0.0)};
  const double inv = 1.0 / den;
  const double q = num * inv * inv;
  out.grad[t] += inv;
  out.grad[y] -= inv;
  out.grad[pi[0]] -= q;
  out.grad[pi[2]] += 0.5 * q;
  out.grad[pi[3]] += 0.5 * q;
  return out;
}

LossEval md_eval(std::span<const double> z, std::size_t t, double delta) {
  check_class(z, t, "md_loss");
  LossEval out{0.0, std::vector<double>(z.size(), 0.0)};
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double term = z[i] + delta - z[t];
    if (term > 0.0) {
      out.value += term;
      if (i != t) {
        out.grad[i] += 1.0;
        out.grad[t] -= 1.0;
      }
    }
  }
  return out;
}

LossEval cw_star_eval(std::span<const double> z, std::size_t y, double delta) {
  check_k(z, 2, "cw_star_loss");
  check_class(z, y, "cw_star_loss");
  const std::size_t r = runner_up(z, y);
  const double term = z[y] + delta - z[r];
  LossEval out{0.0, std::vector<double>(z.size(), 0.0)};
  if (term > 0.0) {
    out.value = term;
    out.grad[y] += 1.0;
    out.grad[r] -= 1.0;
  }
  return out;
}

LossEval dlr_untargeted_eval(std::span<const double> z, std::size_t y) {
  check_k(z, 3, "dlr_untargeted_loss");
  check_class(z, y, "dlr_untargeted_loss");
  const auto pi = descending_order(z);
  const std::size_t r = runner_up(z, y);
  const double num = z[y] - z[r];
  const double den = z[pi[0]] - z[pi[2]];
  if (den == 0.0) throw DegenerateLogitsError("dlr_untargeted_loss: zero denominator");
  LossEval out{num / den, std::vector<double>(z.size(), 0.0)};
  const double inv = 1.0 / den;
  const double q = num * inv * inv;
  out.grad[y] += inv;
  out.grad[r] -= inv;
  out.grad[pi[0]] -= q;
  out.grad[pi[2]] += q;
  return out;
}

}  // namespace

LossId parse_loss_id(std::string_view name) {
  if (name == "ce") return LossId::ce;
  if (name == "cw") return LossId::cw;
  if (name == "dlr") return LossId::dlr;
  if (name == "md") return LossId::md;
  if (name == "cw_star") return LossId::cw_star;
  if (name == "dlr_untargeted") return LossId::dlr_untargeted;
  throw DomainError("unknown loss id '" + std::string(name) + "'");
}

std::string_view loss_name(LossId id) {
  switch (id) {
    case LossId::ce: return "ce";
    case LossId::cw: return "cw";
    case LossId::dlr: return "dlr";
    case LossId::md: return "md";
    case LossId::cw_star: return "cw_star";
    case LossId::dlr_untargeted: return "dlr_untargeted";
  }
  throw DomainError("undefined loss id");
}

double ce_loss(std::span<const double> z, std::size_t y) { return ce_eval(z, y).value; }
double cw_loss(std::span<const double> z, std::size_t t) { return cw_eval(z, t).value; }
double dlr_targeted_loss(std::span<const double> z, std::size_t t, std::size_t y) {
  return dlr_eval(z, t, y).value;
}
double md_loss(std::span<const double> z, std::size_t t, double delta) {
  return md_eval(z, t, delta).value;
}
double cw_star_loss(std::span<const double> z, std::size_t y, double delta) {
  return cw_star_eval(z, y, delta).value;
}
double dlr_untargeted_loss(std::span<const double> z, std::size_t y) {
  return dlr_untargeted_eval(z, y).value;
}

double boundary_loss(const Tensor& xp, const EpsilonBall& ball) {
  const Tensor o = overrun(xp, ball);
  double s = 0.0;
  for (double v : o.values()) s += v * v;
  return s;
}

Tensor boundary_loss_gradient(const Tensor& xp, const EpsilonBall& ball) {
  require_same_shape(xp, ball.source(), "boundary_loss_gradient");
  Tensor g(xp.shape());
  const auto& hi = ball.upper();
  const auto& lo = ball.lower();
  for (std::size_t i = 0; i < g.size(); ++i) {
    g[i] = 2.0 * (std::max(xp[i] - hi[i], 0.0) - std::max(lo[i] - xp[i], 0.0));
  }
  return g;
}

LossValue combined_loss(double l_cls, double l_bnd, double w) {
  if (!(w >= 0.0 && w <= 1.0)) {
    throw DomainError("combined_loss: weight " + std::to_string(w) + " outside [0, 1]");
  }
  return {w * l_cls + (1.0 - w) * l_bnd, std::pair{l_cls, l_bnd}};
}

LossEval loss_with_gradient(const LossSpec& spec, std::span<const double> z) {
  if (z.empty()) throw DomainError("loss: empty logits");
  switch (spec.id) {
    case LossId::ce: return ce_eval(z, spec.cls);
    case LossId::cw: return cw_eval(z, spec.cls);
    case LossId::dlr: return dlr_eval(z, spec.cls, spec.label);
    case LossId::md: return md_eval(z, spec.cls, spec.delta);
    case LossId::cw_star: return cw_star_eval(z, spec.cls, spec.delta);
    case LossId::dlr_untargeted: return dlr_untargeted_eval(z, spec.cls);
  }
  throw DomainError("undefined loss id");
}

double loss_value(const LossSpec& spec, std::span<const double> z) {
  return loss_with_gradient(spec, z).value;
}

}  // namespace evadekit

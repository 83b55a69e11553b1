#include "evadekit/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "evadekit/error.hpp"
#include "evadekit/rng.hpp"

namespace evadekit {

namespace {

using Clock = std::chrono::steady_clock;

double sign_of(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

Tensor negated(const Tensor& t) {
  Tensor out = t;
  for (double& v : out.values()) v = -v;
  return out;
}

// Bookkeeping shared by every attack loop: history, first success, timing.
class OutcomeRecorder {
 public:
  explicit OutcomeRecorder(const AttackConfig& cfg) : cfg_(cfg), start_(Clock::now()) {}

  // Returns true when the loop should stop.
  bool record(std::size_t iteration, CheckResult check) {
    out_.prediction_history.push_back(check.predicted);
    out_.iterations_used = iteration;
    if (check.success && !out_.success) {
      out_.success = true;
      out_.success_iteration = iteration;
      out_.adversarial = check.x_test;
    }
    out_.last_candidate = std::move(check.x_test);
    return out_.success && cfg_.early_exit;
  }

  // Extra quantized probe (gradient-aligned rounding); counts as a success
  // without adding a history entry.
  bool probe(std::size_t iteration, CheckResult check) {
    if (check.success && !out_.success) {
      out_.success = true;
      out_.success_iteration = iteration;
      out_.adversarial = std::move(check.x_test);
    }
    return out_.success && cfg_.early_exit;
  }

  AttackOutcome finish(double final_overrun_max) {
    out_.final_overrun_max = final_overrun_max;
    out_.elapsed = std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - start_);
    return std::move(out_);
  }

  std::size_t iterations_used() const { return out_.iterations_used; }

 private:
  const AttackConfig& cfg_;
  Clock::time_point start_;
  AttackOutcome out_;
};

bool aligned_probe(OutcomeRecorder& rec, std::size_t iteration, const Model& model,
                   const Tensor& xp, const Tensor& descent, const EpsilonBall& ball,
                   const AttackGoal& goal) {
  const Tensor q = clip_to_ball(quantize_grad_aligned(xp, descent), ball);
  const std::size_t pred = model.predict(q);
  return rec.probe(iteration, {goal.satisfied_by(pred), q, pred});
}

struct ObjectiveEval {
  double value;
  Tensor grad;
};

// Minimization objective sign * loss; a degenerate DLR denominator yields
// +inf with a zero gradient.
ObjectiveEval evaluate_objective(const Model& model, const LossSpec& spec, double sign,
                                 const Tensor& x) {
  try {
    auto ig = input_gradient(model, spec, x);
    if (sign < 0.0) {
      for (double& v : ig.grad.values()) v = -v;
    }
    return {sign * ig.loss, std::move(ig.grad)};
  } catch (const DegenerateLogitsError&) {
    return {std::numeric_limits<double>::infinity(), Tensor(x.shape())};
  }
}

AttackOutcome run_cgd_impl(const Model& model, const Tensor& x, const AttackGoal& goal,
                           const AttackConfig& cfg, const CgdObserver& observer) {
  cfg.validate();
  OutcomeRecorder rec(cfg);
  const EpsilonBall ball(x, cfg.epsilon);
  const LossSpec cls_loss = goal.mode == AttackMode::targeted ? LossSpec::md(goal.cls, cfg.delta)
                                                              : LossSpec::cw_star(goal.cls, cfg.delta);
  const auto checkpoints = cfg.resolved_checkpoints();

  PerturbationState st;
  st.x = random_init(x, ball, cfg.seed);
  st.w = cfg.w_init;
  st.threshold = cfg.threshold_start * cfg.epsilon;
  st.adam = AdamState::zeros(x.shape(), cfg.optimizer);
  Tensor update(x.shape());

  for (std::size_t it = 1; it <= cfg.n_iterations; ++it) {
    st.iteration = it;
    if (std::binary_search(checkpoints.begin(), checkpoints.end(), it)) st.threshold /= 2.0;

    // Weight halving happens before the combined loss is formed.
    const auto ig = input_gradient(model, cls_loss, st.x);
    const double l_bnd = boundary_loss(st.x, ball);
    if (max_overrun(st.x, ball) > st.threshold) st.w /= 2.0;
    st.loss = combined_loss(ig.loss, l_bnd, st.w);
    Tensor grad = boundary_loss_gradient(st.x, ball);
    for (std::size_t i = 0; i < grad.size(); ++i) {
      grad[i] = st.w * ig.grad[i] + (1.0 - st.w) * grad[i];
    }

    if (cfg.grad_aligned_quantization &&
        aligned_probe(rec, it, model, st.x, negated(grad), ball, goal)) {
      break;
    }

    if (it == 1) {
      for (std::size_t i = 0; i < grad.size(); ++i) st.x[i] -= cfg.epsilon * sign_of(grad[i]);
      st.x = clip_to_ball(st.x, ball);
    } else {
      adam_step_inplace(st.adam, grad.values(), update.values());
      for (std::size_t i = 0; i < grad.size(); ++i) st.x[i] -= update[i];
    }

    if (observer) observer(st);
    if (rec.record(it, success_check(model, st.x, ball, goal))) break;
  }
  return rec.finish(max_overrun(st.x, ball));
}

}  // namespace

std::vector<std::size_t> AttackConfig::resolved_checkpoints() const {
  std::vector<std::size_t> out;
  if (!checkpoints.empty()) {
    out = checkpoints;
  } else if (checkpoint_interval > 0) {
    for (std::size_t c = checkpoint_interval; c <= n_iterations; c += checkpoint_interval) {
      out.push_back(c);
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

void AttackConfig::validate() const {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw DomainError("attack: epsilon outside [0, 1]");
  if (n_iterations < 1) throw DomainError("attack: n_iterations must be >= 1");
  if (!(threshold_start > 0.0)) throw DomainError("attack: threshold_start must be positive");
  if (!(w_init > 0.0 && w_init <= 1.0)) throw DomainError("attack: w_init outside (0, 1]");
  for (auto c : checkpoints) {
    if (c < 1 || c > n_iterations) {
      throw DomainError("attack: checkpoint " + std::to_string(c) + " outside [1, n_iterations]");
    }
  }
}

CheckResult success_check(const Model& model, const Tensor& candidate, const EpsilonBall& ball,
                          const AttackGoal& goal) {
  CheckResult r;
  r.x_test = clip_to_ball(quantize_round(candidate), ball);
  r.predicted = model.predict(r.x_test);
  r.success = goal.satisfied_by(r.predicted);
  return r;
}

Tensor random_init(const Tensor& x, const EpsilonBall& ball, std::uint64_t seed) {
  CounterRng rng(seed);
  Tensor xp = x;
  for (double& v : xp.values()) v += 2.0 * rng.uniform() - 1.0;
  return clip_to_ball(xp, ball);
}

double objective_sign(LossId loss, AttackMode mode) {
  if (mode == AttackMode::targeted) {
    switch (loss) {
      case LossId::ce:
      case LossId::cw:
      case LossId::md: return 1.0;
      case LossId::dlr: return -1.0;  // (Z_t - Z_y) / ... grows as the target wins
      default: break;
    }
  } else {
    switch (loss) {
      case LossId::ce: return -1.0;
      case LossId::cw_star:
      case LossId::dlr_untargeted: return 1.0;
      default: break;
    }
  }
  throw DomainError("loss '" + std::string(loss_name(loss)) + "' is not supported for " +
                    (mode == AttackMode::targeted ? "targeted" : "untargeted") + " attacks");
}

LossSpec loss_for_goal(LossId loss, const AttackGoal& goal, double delta) {
  objective_sign(loss, goal.mode);
  LossSpec spec{loss, goal.cls, goal.label, delta};
  return spec;
}

AttackOutcome run_pgd(const Model& model, const Tensor& x, const AttackGoal& goal,
                      const AttackConfig& cfg) {
  cfg.validate();
  const double sign = objective_sign(cfg.loss, goal.mode);
  const LossSpec spec = loss_for_goal(cfg.loss, goal, cfg.delta);
  OutcomeRecorder rec(cfg);
  const EpsilonBall ball(x, cfg.epsilon);
  Tensor xp = random_init(x, ball, cfg.seed);
  for (std::size_t it = 1; it <= cfg.pgd_iters; ++it) {
    const auto obj = evaluate_objective(model, spec, sign, xp);
    if (cfg.grad_aligned_quantization &&
        aligned_probe(rec, it, model, xp, negated(obj.grad), ball, goal)) {
      break;
    }
    for (std::size_t i = 0; i < xp.size(); ++i) xp[i] -= cfg.pgd_alpha * sign_of(obj.grad[i]);
    xp = clip_to_ball(xp, ball);
    if (rec.record(it, success_check(model, xp, ball, goal))) break;
  }
  return rec.finish(0.0);
}

StepSizeSchedule::StepSizeSchedule(double initial_step, std::vector<std::size_t> checkpoints,
                                   double rho)
    : step_(initial_step),
      checkpoints_(std::move(checkpoints)),
      rho_(rho),
      step_at_last_(initial_step),
      best_at_last_(std::numeric_limits<double>::infinity()) {
  std::sort(checkpoints_.begin(), checkpoints_.end());
}

bool StepSizeSchedule::observe(std::size_t k, double f, double best_f) {
  if (k > 1) {
    ++transitions_;
    if (f < prev_f_) ++improved_;
  }
  prev_f_ = f;
  if (!std::binary_search(checkpoints_.begin(), checkpoints_.end(), k)) return false;
  const bool too_few_improvements =
      transitions_ > 0 && static_cast<double>(improved_) < rho_ * static_cast<double>(transitions_);
  const bool stalled = step_ == step_at_last_ && best_f == best_at_last_;
  step_at_last_ = step_;
  best_at_last_ = best_f;
  improved_ = 0;
  transitions_ = 0;
  if (too_few_improvements || stalled) {
    step_ /= 2.0;
    return true;
  }
  return false;
}

AttackOutcome run_apgd_lite(const Model& model, const Tensor& x, LossId loss,
                            const AttackGoal& goal, const AttackConfig& cfg) {
  cfg.validate();
  const double sign = objective_sign(loss, goal.mode);
  const LossSpec spec = loss_for_goal(loss, goal, cfg.delta);
  constexpr double kMomentum = 0.75;

  OutcomeRecorder rec(cfg);
  const EpsilonBall ball(x, cfg.epsilon);
  StepSizeSchedule schedule(2.0 * cfg.epsilon, cfg.resolved_checkpoints());

  Tensor x_cur = random_init(x, ball, cfg.seed);
  Tensor x_prev = x_cur;
  double best_f = std::numeric_limits<double>::infinity();
  Tensor best_x = x_cur;
  Tensor best_grad(x.shape());
  Tensor z(x.shape());

  for (std::size_t it = 1; it <= cfg.n_iterations; ++it) {
    auto obj = evaluate_objective(model, spec, sign, x_cur);
    if (obj.value < best_f) {
      best_f = obj.value;
      best_x = x_cur;
      best_grad = obj.grad;
    }
    bool restart = it == 1;
    if (schedule.observe(it, obj.value, best_f)) {
      x_cur = best_x;
      x_prev = best_x;
      obj.grad = best_grad;
      restart = true;
    }
    if (cfg.grad_aligned_quantization &&
        aligned_probe(rec, it, model, x_cur, negated(obj.grad), ball, goal)) {
      break;
    }

    const double step = schedule.step();
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = x_cur[i] - step * sign_of(obj.grad[i]);
    z = clip_to_ball(z, ball);
    Tensor x_next = z;
    if (!restart) {
      for (std::size_t i = 0; i < z.size(); ++i) {
        x_next[i] = x_cur[i] + kMomentum * (z[i] - x_cur[i]) + (1.0 - kMomentum) * (x_cur[i] - x_prev[i]);
      }
      x_next = clip_to_ball(x_next, ball);
    }
    x_prev = std::move(x_cur);
    x_cur = std::move(x_next);

    if (rec.record(it, success_check(model, x_cur, ball, goal))) break;
  }
  return rec.finish(0.0);
}

CgdGradient cgd_gradient(const Model& model, const Tensor& x, const EpsilonBall& ball,
                         const LossSpec& cls_loss, double w) {
  const auto ig = input_gradient(model, cls_loss, x);
  CgdGradient out;
  out.loss = combined_loss(ig.loss, boundary_loss(x, ball), w);
  out.grad = boundary_loss_gradient(x, ball);
  for (std::size_t i = 0; i < out.grad.size(); ++i) {
    out.grad[i] = w * ig.grad[i] + (1.0 - w) * out.grad[i];
  }
  out.max_overrun = max_overrun(x, ball);
  return out;
}

AttackOutcome run_cgd(const Model& model, const Tensor& x, std::size_t target,
                      const AttackConfig& cfg, const CgdObserver& observer) {
  return run_cgd_impl(model, x, AttackGoal::targeted(target, target), cfg, observer);
}

AttackOutcome run_cgd_untargeted(const Model& model, const Tensor& x, std::size_t label,
                                 const AttackConfig& cfg, const CgdObserver& observer) {
  return run_cgd_impl(model, x, AttackGoal::untargeted(label), cfg, observer);
}

}  // namespace evadekit

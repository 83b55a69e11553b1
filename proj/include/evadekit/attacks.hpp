#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "evadekit/adam.hpp"
#include "evadekit/geometry.hpp"
#include "evadekit/losses.hpp"
#include "evadekit/model.hpp"

namespace evadekit {

enum class AttackMode { targeted, untargeted };

struct AttackConfig {
  double epsilon = 8.0 / 255.0;
  std::size_t n_iterations = 100;
  std::uint64_t seed = 0;
  // Starting threshold as a multiple of epsilon.
  double threshold_start = 1.5;
  // Explicit checkpoint iterations; when empty, every checkpoint_interval
  // iterations up to n_iterations.
  std::vector<std::size_t> checkpoints;
  std::size_t checkpoint_interval = 15;
  double w_init = 0.1;
  double delta = kDefaultDelta;
  AdamConfig optimizer;
  LossId loss = LossId::ce;
  double pgd_alpha = 0.01;
  std::size_t pgd_iters = 40;
  // Stop at the first successful check. Timing mode turns this off.
  bool early_exit = true;
  // Also test a gradient-aligned rounding of the iterate every iteration.
  bool grad_aligned_quantization = false;

  std::vector<std::size_t> resolved_checkpoints() const;
  void validate() const;
};

// Class the attack aims for (targeted) or away from (untargeted). `label`
// is the true class; only the targeted DLR loss needs it.
struct AttackGoal {
  AttackMode mode = AttackMode::targeted;
  std::size_t cls = 0;
  std::size_t label = 0;

  static AttackGoal targeted(std::size_t target, std::size_t label) {
    return {AttackMode::targeted, target, label};
  }
  static AttackGoal untargeted(std::size_t label) { return {AttackMode::untargeted, label, label}; }

  bool satisfied_by(std::size_t predicted) const {
    return mode == AttackMode::targeted ? predicted == cls : predicted != cls;
  }
};

struct AttackOutcome {
  bool success = false;
  // First successful quantized point; present iff success.
  std::optional<Tensor> adversarial;
  // Quantized, clipped copy of the final iterate.
  Tensor last_candidate;
  std::size_t iterations_used = 0;
  std::size_t success_iteration = 0;  // 0 when no success
  std::vector<std::size_t> prediction_history;
  std::chrono::nanoseconds elapsed{0};
  double final_overrun_max = 0.0;
};

struct CheckResult {
  bool success = false;
  Tensor x_test;
  std::size_t predicted = 0;
};

// x_test = clip_to_ball(quantize_round(candidate)); evaluates the goal on
// argmax(model(x_test)).
CheckResult success_check(const Model& model, const Tensor& candidate, const EpsilonBall& ball,
                          const AttackGoal& goal);

// clip_to_ball(x + 2 * rand - 1) with rand ~ U[0, 1) from CounterRng(seed).
Tensor random_init(const Tensor& x, const EpsilonBall& ball, std::uint64_t seed);

// Sign applied to a loss so that the attack minimizes it; throws DomainError
// for loss/mode pairs the attacks do not support.
double objective_sign(LossId loss, AttackMode mode);
LossSpec loss_for_goal(LossId loss, const AttackGoal& goal, double delta);

// Projected sign-gradient descent, pgd_iters steps of size pgd_alpha.
AttackOutcome run_pgd(const Model& model, const Tensor& x, const AttackGoal& goal,
                      const AttackConfig& cfg);

// Step-size controller for run_apgd_lite. At each checkpoint the step halves
// when fewer than rho of the iterations since the previous checkpoint
// improved the objective, or when neither the step nor the best objective
// changed since then.
class StepSizeSchedule {
 public:
  StepSizeSchedule(double initial_step, std::vector<std::size_t> checkpoints, double rho = 0.75);

  // Objective f at iteration k (1-based) and best objective so far. Returns
  // true when the step was halved at this iteration.
  bool observe(std::size_t k, double f, double best_f);
  double step() const { return step_; }

 private:
  double step_;
  std::vector<std::size_t> checkpoints_;
  double rho_;
  double prev_f_ = 0.0;
  std::size_t improved_ = 0;
  std::size_t transitions_ = 0;
  double step_at_last_;
  double best_at_last_;
};

// Momentum sign-gradient baseline: step 2*eps, momentum 0.75, StepSizeSchedule
// halving with restart from the best point.
AttackOutcome run_apgd_lite(const Model& model, const Tensor& x, LossId loss,
                            const AttackGoal& goal, const AttackConfig& cfg);

// Mutable state of one CGD run.
struct PerturbationState {
  Tensor x;  // continuous iterate, may leave the ball
  double w = 0.0;
  double threshold = 0.0;
  AdamState adam;
  std::size_t iteration = 0;
  LossValue loss;
};

using CgdObserver = std::function<void(const PerturbationState&)>;

struct CgdGradient {
  LossValue loss;
  Tensor grad;
  double max_overrun = 0.0;
};

// Gradient of w * L_cls + (1 - w) * L_bnd at x.
CgdGradient cgd_gradient(const Model& model, const Tensor& x, const EpsilonBall& ball,
                         const LossSpec& cls_loss, double w);

// Constrained gradient descent with MD loss towards `target`.
AttackOutcome run_cgd(const Model& model, const Tensor& x, std::size_t target,
                      const AttackConfig& cfg, const CgdObserver& observer = {});

// Same control flow with the CW* loss; succeeds once argmax != label.
AttackOutcome run_cgd_untargeted(const Model& model, const Tensor& x, std::size_t label,
                                 const AttackConfig& cfg, const CgdObserver& observer = {});

}  // namespace evadekit

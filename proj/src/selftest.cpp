#include <cmath>
#include <iostream>
#include <string>
#include <vector>

#include "evadekit/attacks.hpp"
#include "evadekit/rng.hpp"
#include "evadekit/cli.hpp"
#include "evadekit/harness.hpp"
#include "evadekit/stats.hpp"

namespace evadekit {

namespace {

struct Tally {
  int failed = 0;
  void check(bool ok, const std::string& what) {
    std::cout << (ok ? "PASS " : "FAIL ") << what << "\n";
    if (!ok) ++failed;
  }
};

bool near(double a, double b, double tol) { return std::fabs(a - b) <= tol; }

// Central differences of the loss w.r.t. the input, away from kinks.
double gradient_error(const Model& model, const LossSpec& spec, const Tensor& x) {
  const auto ig = input_gradient(model, spec, x);
  const double h = 1e-4;
  double worst = 0.0;
  double scale = 1e-8;
  for (std::size_t i = 0; i < x.size(); ++i) {
    Tensor up = x;
    Tensor down = x;
    up[i] += h;
    down[i] -= h;
    const double fd = (loss_value(spec, model.logits(up)) - loss_value(spec, model.logits(down))) / (2 * h);
    worst = std::max(worst, std::fabs(fd - ig.grad[i]));
    scale = std::max(scale, std::fabs(fd));
  }
  return worst / scale;
}

}  // namespace

int cmd_selftest() {
  Tally t;
  t.check(near(quantize_round(Tensor::from({0.5}))[0], 128.0 / 255.0, 1e-15), "quantize 0.5 -> 128/255");
  t.check(near(quantize_grad_aligned(Tensor::from({0.5}), Tensor::from({-1.0}))[0], 127.0 / 255.0, 1e-15),
          "gradient-aligned rounding");
  t.check(near(md_loss(std::vector<double>{1.0, 2.0, 0.5}, 0), 1.0, 1e-12), "md loss example");
  t.check(near(cw_loss(std::vector<double>{0, 5, 3}, 0), 5.0, 0.0), "cw loss example");
  t.check(near(dlr_targeted_loss(std::vector<double>{4, 3, 2, 1}, 1, 0), -0.4, 1e-12), "dlr loss example");

  const std::vector<double> d{15, -7, 5, 20, 0};
  const auto w = wilcoxon_pratt_differences(d, Alternative::greater);
  t.check(w.w_plus == 11.0 && w.w_minus == 3.0, "Pratt fixture W+ = 11, W- = 3");
  t.check(near(bonferroni(0.05, 16), 0.003125, 1e-15), "bonferroni .05/16");

  const Model model = make_mlp(6, {5}, 4, 3);
  CounterRng rng(11);
  Tensor x({6});
  for (double& v : x.values()) v = rng.uniform(0.2, 0.8);
  t.check(gradient_error(model, LossSpec::ce(1), x) < 1e-3, "ce input gradient vs finite differences");
  t.check(gradient_error(model, LossSpec::cw(2), x) < 1e-3, "cw input gradient vs finite differences");

  AttackConfig cfg;
  cfg.epsilon = 16.0 / 255.0;
  cfg.n_iterations = 20;
  const Tensor xq = quantize_round(x);
  const auto out = run_cgd(model, xq, 3, cfg);
  bool sound = true;
  if (out.success) {
    sound = is_on_grid(*out.adversarial) && linf_distance(*out.adversarial, xq) <= cfg.epsilon + 1e-9 &&
            model.predict(*out.adversarial) == 3;
  }
  t.check(sound && out.prediction_history.size() == out.iterations_used, "cgd outcome invariants");

  std::cout << (t.failed == 0 ? "selftest passed" : "selftest FAILED") << "\n";
  return t.failed == 0 ? kExitOk : kExitFailure;
}

}  // namespace evadekit

#include "evadekit/train.hpp"

#include <algorithm>
#include <numeric>

#include "evadekit/adam.hpp"
#include "evadekit/attacks.hpp"
#include "evadekit/error.hpp"
#include "evadekit/rng.hpp"

namespace evadekit {

namespace {

struct ParamRef {
  std::vector<double>* values;
  std::size_t layer;
  bool is_bias;
};

std::vector<ParamRef> parameters(Model& model) {
  std::vector<ParamRef> out;
  auto& layers = model.mutable_layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (auto* d = std::get_if<DenseLayer>(&layers[i])) {
      out.push_back({&d->weights, i, false});
      out.push_back({&d->bias, i, true});
    } else if (auto* c = std::get_if<Conv2dLayer>(&layers[i])) {
      out.push_back({&c->weights, i, false});
      out.push_back({&c->bias, i, true});
    }
  }
  return out;
}

AttackConfig pgd_config(double epsilon, std::size_t steps, double alpha, std::uint64_t seed) {
  AttackConfig cfg;
  cfg.epsilon = epsilon;
  cfg.pgd_iters = steps;
  cfg.pgd_alpha = alpha;
  cfg.loss = LossId::ce;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size < 1) throw DomainError("train: batch_size must be >= 1");
  if (!(adversarial_epsilon >= 0.0 && adversarial_epsilon <= 1.0)) {
    throw DomainError("train: adversarial epsilon outside [0, 1]");
  }
  if (!(learning_rate > 0.0)) throw DomainError("train: learning_rate must be positive");
}

Model train(const Model& model, const Dataset& data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.size() == 0) throw DomainError("train: empty dataset");
  for (auto y : data.labels) {
    if (y >= model.num_classes()) throw DomainError("train: label outside [0, K)");
  }
  Model m = model;
  if (cfg.epochs == 0) return m;

  auto params = parameters(m);
  AdamConfig acfg;
  acfg.alpha = cfg.learning_rate;
  std::vector<AdamState> states;
  std::vector<std::vector<double>> updates;
  for (const auto& p : params) {
    states.push_back(AdamState::zeros({p.values->size()}, acfg));
    updates.emplace_back(p.values->size());
  }

  const std::size_t n = data.size();
  std::vector<std::size_t> order(n);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    CounterRng shuffle(CounterRng::derive(cfg.seed, epoch));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t stop = std::min(n, start + cfg.batch_size);
      ParamGrads grads = m.zero_grads();
      for (std::size_t j = start; j < stop; ++j) {
        const std::size_t idx = order[j];
        Tensor x = data.image(idx);
        const std::size_t y = data.labels[idx];
        if (cfg.adversarial) {
          AttackConfig acfg_pgd = pgd_config(cfg.adversarial_epsilon, cfg.adversarial_steps,
                                             cfg.adversarial_alpha,
                                             CounterRng::derive(cfg.seed ^ 0xA5A5A5A5ULL, epoch * n + idx));
          acfg_pgd.early_exit = false;
          x = run_pgd(m, x, AttackGoal::untargeted(y), acfg_pgd).last_candidate;
        }
        const auto tr = m.trace(x.values());
        const auto le = loss_with_gradient(LossSpec::ce(y), tr.logits());
        m.backward(tr, le.grad, &grads);
      }
      const double scale = 1.0 / static_cast<double>(stop - start);
      for (std::size_t p = 0; p < params.size(); ++p) {
        const auto& pr = params[p];
        auto& g = pr.is_bias ? grads[pr.layer].bias : grads[pr.layer].weights;
        for (double& v : g) v *= scale;
        adam_step_inplace(states[p], g, updates[p]);
        auto& vals = *pr.values;
        for (std::size_t k = 0; k < vals.size(); ++k) vals[k] -= updates[p][k];
      }
    }
  }
  return m;
}

double accuracy(const Model& model, const Dataset& data) {
  if (data.size() == 0) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (model.predict(data.image(i)) == data.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

double robust_accuracy(const Model& model, const Dataset& data, double epsilon, std::size_t steps,
                       double alpha, std::uint64_t seed) {
  if (data.size() == 0) return 0.0;
  std::size_t robust = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Tensor x = data.image(i);
    const auto out = run_pgd(model, x, AttackGoal::untargeted(data.labels[i]),
                             pgd_config(epsilon, steps, alpha, CounterRng::derive(seed, i)));
    if (!out.success) ++robust;
  }
  return static_cast<double>(robust) / static_cast<double>(data.size());
}

}  // namespace evadekit

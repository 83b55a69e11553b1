#pragma once

#include <cstdint>

#include "evadekit/dataset.hpp"
#include "evadekit/model.hpp"

namespace evadekit {

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  double learning_rate = 0.01;
  bool adversarial = false;
  double adversarial_epsilon = 8.0 / 255.0;
  std::size_t adversarial_steps = 10;
  double adversarial_alpha = 0.01;
  std::uint64_t seed = 0;

  void validate() const;
};

// Minibatch Adam on mean cross-entropy. With cfg.adversarial each sample is
// replaced by an untargeted PGD perturbation of itself, computed against the
// current weights, before the gradient step.
Model train(const Model& model, const Dataset& data, const TrainConfig& cfg);

double accuracy(const Model& model, const Dataset& data);

// Fraction of samples still classified correctly after untargeted PGD.
double robust_accuracy(const Model& model, const Dataset& data, double epsilon, std::size_t steps,
                       double alpha, std::uint64_t seed);

}  // namespace evadekit

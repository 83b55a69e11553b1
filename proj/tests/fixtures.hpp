#pragma once

#include "evadekit/dataset.hpp"
#include "evadekit/model.hpp"
#include "evadekit/train.hpp"

namespace fixture {

// Small standard-trained CNN on the 8x8 synthetic task; built once per binary.
struct Desk {
  evadekit::Dataset test;
  evadekit::Model model;
};

inline const Desk& desk() {
  static const Desk d = [] {
    evadekit::SyntheticSpec s;
    s.count = 600;
    const evadekit::Dataset tr = evadekit::make_synthetic(s);
    s.sample_seed = 2;
    s.count = 100;
    evadekit::TrainConfig cfg;
    cfg.epochs = 4;
    cfg.learning_rate = 0.005;
    cfg.seed = 1;
    return Desk{evadekit::make_synthetic(s),
                evadekit::train(evadekit::make_cnn(tr.image_shape(), 10, 8, 16, 32, 2), tr, cfg)};
  }();
  return d;
}

}  // namespace fixture

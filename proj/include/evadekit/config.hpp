#pragma once

#include <string>
#include <vector>

#include "evadekit/harness.hpp"
#include "evadekit/stats.hpp"
#include "evadekit/train.hpp"

namespace evadekit {

struct ArchitectureConfig {
  std::string kind = "cnn";  // "cnn" or "mlp"
  std::size_t conv1_channels = 8;
  std::size_t conv2_channels = 16;
  std::size_t hidden = 32;
  std::vector<std::size_t> mlp_hidden{64};
  std::uint64_t init_seed = 0;
};

struct StatsConfig {
  double alpha = 0.05;
  std::int64_t m = 1;
  Alternative alternative = Alternative::greater;
  double continuity_correction = 0.5;
};

// One JSON document with sections model, dataset, train, attacks, harness
// and stats (docs/config_schema.md). Relative paths resolve against the
// directory holding the config file.
struct ToolkitConfig {
  std::string source_path;
  std::string source_text;
  ArchitectureConfig architecture;
  TrainConfig train;
  std::size_t robust_eval_steps = 20;
  ExperimentConfig experiment;
  StatsConfig stats;
  std::size_t timing_repetitions = 5;
};

// Throws ConfigError naming the offending field.
ToolkitConfig parse_config(const std::string& text, const std::string& base_dir = ".");
ToolkitConfig load_config(const std::string& path);

Model build_model(const ArchitectureConfig& arch, const Shape& input_shape, std::size_t num_classes);

}  // namespace evadekit

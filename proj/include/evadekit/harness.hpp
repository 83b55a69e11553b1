#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "evadekit/attacks.hpp"
#include "evadekit/dataset.hpp"
#include "evadekit/model.hpp"
#include "evadekit/stats.hpp"

namespace evadekit {

enum class AttackKind { pgd, apgd, cgd, cgd_untargeted };

AttackKind parse_attack_kind(std::string_view name);
std::string_view attack_kind_name(AttackKind kind);

struct AttackSpec {
  std::string name;  // record "attack" column; unique within an experiment
  AttackKind kind = AttackKind::cgd;
  LossId loss = LossId::md;
  AttackMode mode = AttackMode::targeted;
  AttackConfig config;
};

// Fills loss/mode defaults for the kind and names it "<kind>" for CGD or
// "<kind>-<loss>" (plus "-u" when untargeted) for the baselines.
AttackSpec make_attack_spec(AttackKind kind, std::optional<LossId> loss = {},
                            std::optional<AttackMode> mode = {}, const AttackConfig& config = {});

struct ExperimentConfig {
  std::string model_path;
  DatasetSpec dataset;
  std::vector<AttackSpec> attacks;
  std::vector<std::uint64_t> seeds{0};
  std::vector<std::uint64_t> target_offset_seeds{0};
  std::vector<double> epsilons{8.0 / 255.0};
  // Test-split images [image_offset, image_offset + image_count); 0 = all.
  std::size_t image_offset = 0;
  std::size_t image_count = 0;
  // Images per batch in timing measurements.
  std::size_t batch_size = 50;
  // Records CSV; empty keeps results in memory only.
  std::string output;
  std::size_t threads = 1;
  // Rows between resume checkpoints.
  std::size_t checkpoint_rows = 256;
  // Fill elapsed_us (otherwise 0 so reruns are byte-identical).
  bool record_timing = false;
  // Full iteration budget for every attack, no early exit.
  bool timing_mode = false;
  bool write_histories = true;
  bool store_adversarial = false;

  void validate() const;
  // Human-readable warnings (non grid-aligned epsilons).
  std::vector<std::string> warnings() const;
};

inline constexpr std::string_view kRecordHeader =
    "image_index,attack,loss,seed,offset_seed,epsilon,success,iterations,elapsed_us";

struct AttackRecord {
  std::size_t image_index = 0;
  std::string attack;
  LossId loss = LossId::md;
  std::uint64_t seed = 0;
  std::uint64_t offset_seed = 0;
  double epsilon = 0.0;
  bool success = false;
  std::size_t iterations = 0;
  std::int64_t elapsed_us = 0;
  // Digest of the prediction history; kept in the histories sidecar.
  std::string history_digest;

  friend bool operator==(const AttackRecord&, const AttackRecord&) = default;
};

// Shortest round-trip decimal; parse_epsilon also accepts "k/255".
std::string format_epsilon(double eps);
double parse_epsilon(std::string_view text);

std::string record_to_csv(const AttackRecord& r);
AttackRecord record_from_csv(std::string_view line);
std::vector<AttackRecord> read_records(const std::string& path);
void write_records(const std::string& path, const std::vector<AttackRecord>& records);

// floor(u * (K - 1)) + 1 for u in [0, 1).
std::size_t offset_from_uniform(double u, std::size_t num_classes);
// Offset for one image: u is entry image_index of the stream seeded by seed.
std::size_t target_offset(std::uint64_t seed, std::size_t image_index, std::size_t num_classes);
// (label + offset) mod K; never equal to label.
std::size_t target_class(std::size_t label, std::uint64_t offset_seed, std::size_t image_index,
                         std::size_t num_classes);

// Seed handed to the attack for one (seed, image) cell.
std::uint64_t cell_seed(std::uint64_t seed, std::size_t image_index);

// The spec's AttackConfig with epsilon and seed set for one cell; timing
// mode forces the full budget.
AttackConfig cell_attack_config(const AttackSpec& spec, double epsilon, std::uint64_t seed,
                                std::size_t image_index, bool timing_mode);

AttackGoal cell_goal(const AttackSpec& spec, std::size_t label, std::uint64_t offset_seed,
                     std::size_t image_index, std::size_t num_classes);

AttackOutcome run_attack(const Model& model, const Tensor& x, const AttackSpec& spec,
                         const AttackGoal& goal, const AttackConfig& cfg);

struct CellResult {
  AttackRecord record;
  std::vector<std::size_t> history;
  std::optional<Tensor> adversarial;
};

// One cell of the sweep; image_index indexes `data`.
CellResult run_cell(const Model& model, const Dataset& data, const AttackSpec& spec, double epsilon,
                    std::uint64_t seed, std::uint64_t offset_seed, std::size_t image_index,
                    const ExperimentConfig& cfg);

struct SweepResult {
  std::vector<AttackRecord> records;
  std::size_t resumed_rows = 0;
  std::string content_sha256;  // of the records CSV bytes
};

// Cartesian sweep ordered epsilon > offset seed > seed > attack > image.
// Records stream through a single ordered sink; with cfg.output set they
// are persisted incrementally next to a JSON sidecar and a partial run is
// resumed after verifying its checksum.
SweepResult run_sweep(const Model& model, const Dataset& test, const ExperimentConfig& cfg);

// Loads cfg.model_path and the test split, then run_sweep.
SweepResult run_experiment(const ExperimentConfig& cfg);

std::size_t sweep_cell_count(const ExperimentConfig& cfg, std::size_t n_images);

// Sidecar paths derived from the records path.
std::string sidecar_path(const std::string& records_path);
std::string histories_path(const std::string& records_path);
std::string adversarial_store_path(const std::string& records_path);

// Canonical JSON text of the experiment configuration.
std::string experiment_config_json(const ExperimentConfig& cfg);

// Re-checks every stored adversarial tensor: on grid, inside the ball and
// satisfying its goal. Returns the number checked; throws DataError on the
// first violation.
std::size_t verify_adversarial_store(const Model& model, const Dataset& test,
                                     const ExperimentConfig& cfg,
                                     const std::vector<AttackRecord>& records);

// Successes over every (seed, offset seed) trial of one image. Records must
// hold a single attack and epsilon for that image.
std::size_t conditional_success(const std::vector<AttackRecord>& records, std::size_t image_index);
std::size_t conditional_success(const std::vector<AttackRecord>& records, std::size_t image_index,
                                std::string_view attack, double epsilon);

// Per-image conditional success of two attacks on identical image sets.
PairedSampleSet paired_counts(const std::vector<AttackRecord>& records, std::string_view attack_a,
                              std::string_view attack_b, double epsilon);
PairedSampleSet paired_counts(const std::vector<AttackRecord>& records_a, std::string_view attack_a,
                              const std::vector<AttackRecord>& records_b, std::string_view attack_b,
                              double epsilon);

// Successful image indices per attack per (seed, offset seed) set.
struct SuccessMatrix {
  struct SetKey {
    std::uint64_t seed;
    std::uint64_t offset_seed;
    friend auto operator<=>(const SetKey&, const SetKey&) = default;
  };
  std::vector<std::string> attacks;
  std::vector<SetKey> sets;
  // successes[attack][set] sorted image indices
  std::vector<std::vector<std::vector<std::size_t>>> successes;
};

SuccessMatrix success_matrix(const std::vector<AttackRecord>& records, double epsilon);

struct UniquenessResult {
  std::vector<std::string> attacks;
  // a_not_b[i][j]: mean |S_i \ S_j| over sets; diagonal 0.
  std::vector<std::vector<double>> a_not_b;
  // mean |S_i \ union_{j != i} S_j|
  std::vector<double> exclusive;
  std::size_t set_count = 0;
};

UniquenessResult uniqueness_matrix(const SuccessMatrix& matrix);
UniquenessResult uniqueness_matrix(const std::vector<AttackRecord>& records, double epsilon);

// Largest number of changes to one class; the first entry counts as a
// change to its class.
std::size_t fluctuation_metric(const std::vector<std::size_t>& history);

struct TimingResult {
  double mean_seconds = 0.0;
  double stddev_seconds = 0.0;
  std::vector<double> samples;
};

// Runs `batch` once as warm-up, then `repetitions` timed runs. stddev is
// the sample standard deviation (0 for a single repetition).
TimingResult measure_timing(const std::function<void()>& batch, std::size_t repetitions);

// Two batches timed in alternating order (AB, BA, ...) after one warm-up
// each, so drift of the host load falls on both alike.
std::pair<TimingResult, TimingResult> measure_paired_timing(const std::function<void()>& batch_a,
                                                            const std::function<void()>& batch_b,
                                                            std::size_t repetitions);

// One attack over a batch of images with the full iteration budget; model
// and batch must outlive the callable.
std::function<void()> attack_batch(const Model& model, const Dataset& batch, const AttackSpec& spec,
                                   double epsilon, std::uint64_t seed);

// Times one attack over a batch of images with the full iteration budget.
TimingResult measure_attack_timing(const Model& model, const Dataset& batch, const AttackSpec& spec,
                                   double epsilon, std::uint64_t seed, std::size_t repetitions);

}  // namespace evadekit

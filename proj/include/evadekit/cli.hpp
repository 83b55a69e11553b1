#pragma once

#include <optional>
#include <string>
#include <vector>

namespace evadekit {

inline constexpr const char* kToolkitVersion = "0.1.0";

enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitConfig = 2, kExitData = 3 };

struct CliOptions {
  std::string config;
  std::string manifest;  // replay: config path and overrides come from here
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  bool timing_mode = false;
};

struct StatsOptions {
  std::string records_a;
  std::string records_b;
  std::string attack_a;
  std::string attack_b;
  std::string pairs;  // two-column CSV of paired counts
  std::string config;
  std::optional<double> alpha;
  std::optional<std::int64_t> m;
  std::string alternative;
  std::string out;  // JSON report; stdout when empty
};

struct ReportOptions {
  std::vector<std::string> records;
  std::string out = ".";
};

// Each command returns an ExitCode and reports errors on stderr.
int cmd_train(const CliOptions& opt);
int cmd_attack(const CliOptions& opt);
int cmd_stats(const StatsOptions& opt);
int cmd_report(const ReportOptions& opt);
int cmd_selftest();

int run_cli(int argc, char** argv);

// Summary of the machine a run executed on.
std::string host_fingerprint();

}  // namespace evadekit

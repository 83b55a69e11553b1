#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "evadekit/error.hpp"

namespace evadekit {

// Every difference is zero; the signed-rank test has nothing to rank.
class UndefinedTestError : public DomainError {
 public:
  using DomainError::DomainError;
};

enum class Alternative { greater, less, two_sided };
enum class TestMethod { exact, normal_approx };

Alternative parse_alternative(std::string_view name);
std::string_view alternative_name(Alternative alt);
std::string_view method_name(TestMethod method);

// Paired per-image success counts.
struct PairedSampleSet {
  std::vector<std::int64_t> a;
  std::vector<std::int64_t> b;
  // Largest admissible count (trials per image); unchecked when empty.
  std::optional<std::int64_t> ceiling;

  void validate() const;
};

struct WilcoxonOptions {
  double continuity_correction = 0.5;
  // Default path: exact distribution for n_effective <= exact_max_n.
  std::size_t exact_max_n = 12;
  std::optional<TestMethod> force_method;
};

struct TestResult {
  double statistic = 0.0;  // W+
  double w_plus = 0.0;
  double w_minus = 0.0;
  double p_value = 1.0;
  std::size_t n_effective = 0;
  std::size_t n_zero = 0;
  TestMethod method = TestMethod::exact;
  double z = 0.0;  // normal approximation only
};

// Ranks of |d| over all entries, zeros included, ties sharing the average
// rank.
std::vector<double> pratt_ranks(std::span<const double> d);

// Signed-rank test on d = a - b with Pratt zero handling. "greater" tests
// whether a tends to exceed b.
TestResult wilcoxon_pratt_differences(std::span<const double> d, Alternative alt,
                                      const WilcoxonOptions& opt = {});
TestResult wilcoxon_pratt(const PairedSampleSet& samples, Alternative alt,
                          const WilcoxonOptions& opt = {});

// Null distribution of W+ for the given ranks: P(W+ >= w) and P(W+ <= w),
// computed over all 2^n sign assignments by dynamic programming.
struct ExactTail {
  double upper = 1.0;
  double lower = 1.0;
};
ExactTail exact_signed_rank_tails(std::span<const double> ranks, double w_plus);

double bonferroni(double alpha, std::int64_t m);

double normal_cdf(double z);

}  // namespace evadekit

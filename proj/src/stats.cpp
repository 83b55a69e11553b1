#include "evadekit/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace evadekit {

Alternative parse_alternative(std::string_view name) {
  if (name == "greater") return Alternative::greater;
  if (name == "less") return Alternative::less;
  if (name == "two-sided" || name == "two_sided") return Alternative::two_sided;
  throw DomainError("unknown alternative '" + std::string(name) + "'");
}

std::string_view alternative_name(Alternative alt) {
  switch (alt) {
    case Alternative::greater: return "greater";
    case Alternative::less: return "less";
    case Alternative::two_sided: return "two-sided";
  }
  return "?";
}

std::string_view method_name(TestMethod method) {
  return method == TestMethod::exact ? "exact" : "normal-approx";
}

void PairedSampleSet::validate() const {
  if (a.size() != b.size()) throw ShapeError("paired samples: a and b differ in length");
  if (a.empty()) throw DomainError("paired samples: empty");
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] < 0 || b[i] < 0) throw DomainError("paired samples: negative count");
    if (ceiling && (a[i] > *ceiling || b[i] > *ceiling)) {
      throw DomainError("paired samples: count above trial ceiling " + std::to_string(*ceiling));
    }
  }
}

std::vector<double> pratt_ranks(std::span<const double> d) {
  const std::size_t n = d.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return std::fabs(d[i]) < std::fabs(d[j]); });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && std::fabs(d[order[j + 1]]) == std::fabs(d[order[i]])) ++j;
    const double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

ExactTail exact_signed_rank_tails(std::span<const double> ranks, double w_plus) {
  // Pratt ranks are multiples of 1/2, so doubled ranks are integers.
  std::vector<std::size_t> r2;
  std::size_t total = 0;
  for (double r : ranks) {
    const auto v = static_cast<std::size_t>(std::llround(2.0 * r));
    r2.push_back(v);
    total += v;
  }
  std::vector<double> count(total + 1, 0.0);
  count[0] = 1.0;
  std::size_t reach = 0;
  for (auto v : r2) {
    for (std::size_t s = reach + 1; s-- > 0;) {
      if (count[s] != 0.0) count[s + v] += count[s];
    }
    reach += v;
  }
  const double all = std::ldexp(1.0, static_cast<int>(r2.size()));
  const auto w2 = static_cast<long long>(std::llround(2.0 * w_plus));
  double upper = 0.0;
  double lower = 0.0;
  for (std::size_t s = 0; s <= total; ++s) {
    if (static_cast<long long>(s) >= w2) upper += count[s];
    if (static_cast<long long>(s) <= w2) lower += count[s];
  }
  return {upper / all, lower / all};
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

TestResult wilcoxon_pratt_differences(std::span<const double> d, Alternative alt,
                                      const WilcoxonOptions& opt) {
  if (d.empty()) throw DomainError("wilcoxon: no pairs");
  for (double v : d) {
    if (!std::isfinite(v)) throw DomainError("wilcoxon: non-finite difference");
  }
  const auto ranks = pratt_ranks(d);
  TestResult res;
  std::vector<double> kept;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i] == 0.0) {
      ++res.n_zero;
      continue;
    }
    kept.push_back(ranks[i]);
    (d[i] > 0.0 ? res.w_plus : res.w_minus) += ranks[i];
  }
  res.n_effective = kept.size();
  if (res.n_effective == 0) throw UndefinedTestError("wilcoxon: all differences are zero");
  res.statistic = res.w_plus;

  res.method = opt.force_method.value_or(res.n_effective <= opt.exact_max_n ? TestMethod::exact
                                                                            : TestMethod::normal_approx);
  double p_upper = 1.0;
  double p_lower = 1.0;
  if (res.method == TestMethod::exact) {
    const auto tail = exact_signed_rank_tails(kept, res.w_plus);
    p_upper = tail.upper;
    p_lower = tail.lower;
  } else {
    // Mean and variance conditional on the realized ranks; with tied ranks
    // sum(r^2)/4 equals n(n+1)(2n+1)/24 - sum(t^3 - t)/48.
    double sum_r = 0.0;
    double sum_r2 = 0.0;
    for (double r : kept) {
      sum_r += r;
      sum_r2 += r * r;
    }
    const double mean = sum_r / 2.0;
    const double sd = std::sqrt(sum_r2 / 4.0);
    const double cc = opt.continuity_correction;
    res.z = (res.w_plus - mean) / sd;
    p_upper = 1.0 - normal_cdf((res.w_plus - mean - cc) / sd);
    p_lower = normal_cdf((res.w_plus - mean + cc) / sd);
  }
  switch (alt) {
    case Alternative::greater: res.p_value = p_upper; break;
    case Alternative::less: res.p_value = p_lower; break;
    case Alternative::two_sided: res.p_value = 2.0 * std::min(p_upper, p_lower); break;
  }
  res.p_value = std::clamp(res.p_value, 0.0, 1.0);
  return res;
}

TestResult wilcoxon_pratt(const PairedSampleSet& samples, Alternative alt, const WilcoxonOptions& opt) {
  samples.validate();
  std::vector<double> d(samples.a.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    d[i] = static_cast<double>(samples.a[i] - samples.b[i]);
  }
  return wilcoxon_pratt_differences(d, alt, opt);
}

double bonferroni(double alpha, std::int64_t m) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("bonferroni: alpha outside (0, 1)");
  if (m < 1) throw DomainError("bonferroni: m must be >= 1");
  return alpha / static_cast<double>(m);
}

}  // namespace evadekit

#pragma once

#include <cstdint>

namespace evadekit {

// Counter-based generator built on the SplitMix64 finalizer.
//
// Output number i of a stream with key k is mix64(k + (i + 1) * 0x9E3779B97F4A7C15)
// where mix64 is the SplitMix64 output function. Streams are random-access
// and identical across platforms. uniform() maps the top 53 bits onto [0, 1).
class CounterRng {
 public:
  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

  explicit CounterRng(std::uint64_t key, std::uint64_t counter = 0)
      : key_(key), counter_(counter) {}

  // Key for a sub-stream, e.g. (seed, image index).
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream);

  static std::uint64_t mix64(std::uint64_t z);

  std::uint64_t at(std::uint64_t index) const { return mix64(key_ + (index + 1) * kGamma); }
  double uniform_at(std::uint64_t index) const { return to_unit(at(index)); }

  std::uint64_t next_u64() { return at(counter_++); }
  double uniform() { return to_unit(next_u64()); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Standard normal via Box-Muller (consumes two draws).
  double normal();
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

  static double to_unit(std::uint64_t bits) {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_;
};

}  // namespace evadekit

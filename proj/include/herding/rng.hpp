#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string_view>

namespace herding {

// Portable random stream: the engine is std::mt19937_64, whose output is
// fixed by the standard, and every variate is derived here rather than via
// <random> distributions (those are implementation-defined).
class Rng {
 public:
  static constexpr std::string_view kAlgorithm =
      "mt19937_64 + 53-bit uniform + Marsaglia polar normal";

  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  double uniform();                   // in (0, 1)
  double normal();                    // standard normal
  double student_t(int dof);          // Student-t, integer dof
  std::size_t below(std::size_t n);   // uniform on [0, n)

 private:
  std::mt19937_64 engine_;
  std::optional<double> spare_;
};

// SplitMix64 finalizer; derives independent seeds for substreams.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace herding

#pragma once

#include <cstdint>
#include <limits>
#include <string_view>

namespace radsynth {

/// Counter-based generator: the i-th draw is a pure function of (key, i).
///
/// Streams for independent consumers are obtained with derive(label), so a
/// single root seed fans out deterministically regardless of call order in
/// other streams. Satisfies UniformRandomBitGenerator, so the standard
/// distributions can be driven by it.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0) noexcept;

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() noexcept;

  /// Independent stream keyed by this stream's key and a label.
  [[nodiscard]] Rng derive(std::string_view label) const noexcept;
  [[nodiscard]] Rng derive(std::uint64_t index) const noexcept;

  /// Uniform in [0, 1).
  double uniform() noexcept;
  /// Standard normal (Box-Muller, no cached second value).
  double normal() noexcept;
  /// Poisson draw with the given mean (mean >= 0).
  std::uint64_t poisson(double mean);
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) noexcept;

  [[nodiscard]] std::uint64_t key() const noexcept { return key_; }
  [[nodiscard]] std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;
std::uint64_t fnv1a64(std::string_view bytes,
                      std::uint64_t basis = 0xcbf29ce484222325ULL) noexcept;

}  // namespace radsynth

#include "radsynth/rng.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace radsynth {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis) noexcept {
  std::uint64_t h = basis;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

Rng::Rng(std::uint64_t seed) noexcept : key_(splitmix64(seed ^ 0x5eedULL)) {}

Rng::result_type Rng::operator()() noexcept {
  // Two rounds of mixing keep adjacent counters decorrelated.
  return splitmix64(splitmix64(key_ + 0x9e3779b97f4a7c15ULL * ++counter_) ^ key_);
}

Rng Rng::derive(std::string_view label) const noexcept {
  Rng child(0);
  child.key_ = splitmix64(key_ ^ fnv1a64(label));
  return child;
}

Rng Rng::derive(std::uint64_t index) const noexcept {
  Rng child(0);
  child.key_ = splitmix64(key_ ^ splitmix64(index + 0x1234567ULL));
  return child;
}

double Rng::uniform() noexcept {
  return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
}

double Rng::normal() noexcept {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Rng::poisson(double mean) {
  if (!(mean > 0.0)) return 0;
  std::poisson_distribution<std::uint64_t> dist(mean);
  return dist(*this);
}

std::uint64_t Rng::below(std::uint64_t n) noexcept {
  if (n == 0) return 0;
  // Rejection to avoid modulo bias.
  const std::uint64_t limit = max() - max() % n;
  std::uint64_t r;
  do {
    r = (*this)();
  } while (r >= limit);
  return r % n;
}

}  // namespace radsynth

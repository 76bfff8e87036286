#include <doctest.h>

#include <cmath>
#include <numbers>

#include "radsynth/errors.hpp"
#include "radsynth/schedules.hpp"

using namespace radsynth;

TEST_CASE("cosine schedule endpoints and bounds") {
  const auto s = cosine_schedule(1000, 0.008);
  CHECK(s.alpha_bar(1) > 1.0 - 1e-4);
  CHECK(s.alpha_bar(1000) < 1e-3);
  for (int t = 1; t <= 1000; ++t) {
    CHECK(s.beta(t) >= 0.0);
    CHECK(s.beta(t) <= 0.999);
    if (t > 1) {
      CHECK(s.beta(t) >= s.beta(t - 1));
      CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
      CHECK(std::abs(s.alpha_bar(t) / s.alpha_bar(t - 1) - (1.0 - s.beta(t))) < 1e-12);
    }
  }
}

TEST_CASE("cosine schedule matches the closed form before clipping") {
  const int T = 200;
  const double off = 0.008;
  const auto s = cosine_schedule(T, off);
  auto f = [&](double t) {
    const double c = std::cos((t / T + off) / (1 + off) * std::numbers::pi / 2);
    return c * c;
  };
  // Early steps are far from the upper clip, so the cumulative product equals f(t)/f(0).
  for (int t : {1, 10, 50, 100}) CHECK(s.alpha_bar(t) == doctest::Approx(f(t) / f(0)).epsilon(1e-10));
}

TEST_CASE("cosine schedule rejects bad bounds") {
  CHECK_THROWS_AS((void)cosine_schedule(1), ArgumentError);
  CHECK_THROWS_AS((void)cosine_schedule(10, 0.0), ArgumentError);
  CHECK_THROWS_AS((void)cosine_schedule(10, 0.008, 0.5, 0.4), ArgumentError);
  CHECK_THROWS_AS((void)cosine_schedule(10, 0.008, 0.0, 1.0), ArgumentError);
}

TEST_CASE("linear schedule") {
  const auto s = linear_schedule(2, 0.1, 0.2);
  CHECK(s.alpha_bar(1) == doctest::Approx(0.9));
  CHECK(s.alpha_bar(2) == doctest::Approx(0.72));
  const auto c = linear_schedule(5, 0.05, 0.05);
  for (int t = 1; t <= 5; ++t) CHECK(c.beta(t) == 0.05);
  const auto l = linear_schedule(1000);
  double logsum = 0.0;
  for (int t = 1; t <= 1000; ++t) logsum += std::log1p(-l.beta(t));
  CHECK(l.alpha_bar(1000) == doctest::Approx(std::exp(logsum)).epsilon(1e-9));
  CHECK_THROWS_AS((void)linear_schedule(10, 0.0, 0.02), ArgumentError);
  CHECK_THROWS_AS((void)linear_schedule(10, 0.03, 0.02), ArgumentError);
}

TEST_CASE("cosine starts slower than linear") {
  const auto c = cosine_schedule(1000);
  const auto l = linear_schedule(1000);
  for (int t = 1; t <= 20; ++t) CHECK(c.beta(t) < l.beta(t) + 1e-3);
  CHECK(c.alpha_bar(100) > l.alpha_bar(100));
}

TEST_CASE("ema gamma") {
  const EmaSchedule e{0.9, 100};
  CHECK(ema_gamma(0, e) == 0.9);
  CHECK(ema_gamma(100, e) == 1.0);
  CHECK(ema_gamma(50, e) == doctest::Approx(0.95).epsilon(1e-12));
  double prev = 0.0;
  for (int k = 0; k <= 100; ++k) {
    const double g = ema_gamma(k, e);
    CHECK(g >= prev);
    CHECK(g >= 0.9);
    CHECK(g <= 1.0);
    prev = g;
  }
  CHECK_THROWS_AS((void)ema_gamma(101, e), ArgumentError);
  CHECK_THROWS_AS((void)ema_gamma(-1, e), ArgumentError);
}

TEST_CASE("ddim subsequence") {
  const auto s = ddim_subsequence(1000, 250);
  REQUIRE(s.size() == 250);
  CHECK(s.front() == 4);
  CHECK(s.back() == 1000);
  for (std::size_t i = 1; i < s.size(); ++i) CHECK(s[i] - s[i - 1] == 4);
  const auto id = ddim_subsequence(10, 10);
  for (int i = 0; i < 10; ++i) CHECK(id[i] == i + 1);
  CHECK(ddim_subsequence(10, 1) == std::vector<int>{10});
  CHECK_THROWS_AS((void)ddim_subsequence(10, 11), ArgumentError);
  CHECK_THROWS_AS((void)ddim_subsequence(10, 0), ArgumentError);
}

TEST_CASE("schedule serialization round trip") {
  const auto s = cosine_schedule(100);
  const auto r = NoiseSchedule::deserialize(s.serialize());
  CHECK(r.betas() == s.betas());
  CHECK(r.alpha_bars() == s.alpha_bars());
  CHECK(r.offset() == s.offset());
  CHECK_THROWS_AS((void)NoiseSchedule::deserialize("T = 3\nbetas = 0.1\n"), DecodeError);
}

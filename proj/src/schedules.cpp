#include "radsynth/schedules.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>

#include "radsynth/errors.hpp"

namespace radsynth {

NoiseSchedule::NoiseSchedule(Kind kind, std::vector<double> betas, double beta_min,
                             double beta_max, double offset)
    : kind_(kind),
      betas_(std::move(betas)),
      beta_min_(beta_min),
      beta_max_(beta_max),
      offset_(offset) {
  if (betas_.empty()) throw ArgumentError("NoiseSchedule: no steps");
  alphas_.resize(betas_.size());
  alpha_bars_.resize(betas_.size());
  double running = 1.0;
  for (std::size_t i = 0; i < betas_.size(); ++i) {
    if (!(betas_[i] >= 0.0 && betas_[i] < 1.0)) {
      throw ArgumentError("NoiseSchedule: beta outside [0,1)");
    }
    alphas_[i] = 1.0 - betas_[i];
    running *= alphas_[i];
    alpha_bars_[i] = running;
  }
}

double NoiseSchedule::beta(int t) const {
  if (t < 1 || t > steps()) throw ArgumentError("beta: timestep out of range");
  return betas_[t - 1];
}

double NoiseSchedule::alpha(int t) const {
  if (t < 1 || t > steps()) throw ArgumentError("alpha: timestep out of range");
  return alphas_[t - 1];
}

double NoiseSchedule::alpha_bar(int t) const {
  if (t == 0) return 1.0;
  if (t < 0 || t > steps()) throw ArgumentError("alpha_bar: timestep out of range");
  return alpha_bars_[t - 1];
}

std::string NoiseSchedule::serialize() const {
  std::ostringstream out;
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << "kind = " << (kind_ == Kind::kCosine ? "cosine" : "linear") << '\n';
  out << "T = " << steps() << '\n';
  out << "s = " << offset_ << '\n';
  out << "beta_min = " << beta_min_ << '\n';
  out << "beta_max = " << beta_max_ << '\n';
  out << "betas =";
  for (double b : betas_) out << ' ' << b;
  out << '\n';
  return out.str();
}

NoiseSchedule NoiseSchedule::deserialize(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  Kind kind = Kind::kCosine;
  double s = 0.0, lo = 0.0, hi = 0.999;
  int steps = -1;
  std::vector<double> betas;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string key = line.substr(0, eq);
    key.erase(key.find_last_not_of(" \t") + 1);
    std::istringstream value(line.substr(eq + 1));
    if (key == "kind") {
      std::string k;
      value >> k;
      kind = k == "linear" ? Kind::kLinear : Kind::kCosine;
    } else if (key == "T") {
      value >> steps;
    } else if (key == "s") {
      value >> s;
    } else if (key == "beta_min") {
      value >> lo;
    } else if (key == "beta_max") {
      value >> hi;
    } else if (key == "betas") {
      double b;
      while (value >> b) betas.push_back(b);
    }
  }
  if (steps < 0 || static_cast<int>(betas.size()) != steps) {
    throw DecodeError("schedule dump: T does not match beta count");
  }
  return NoiseSchedule(kind, std::move(betas), lo, hi, s);
}

NoiseSchedule cosine_schedule(int steps, double offset, double beta_min, double beta_max) {
  if (steps < 2) throw ArgumentError("cosine_schedule: T must be >= 2");
  if (!(offset > 0.0)) throw ArgumentError("cosine_schedule: offset must be positive");
  if (!(beta_min >= 0.0 && beta_min < beta_max && beta_max < 1.0)) {
    throw ArgumentError("cosine_schedule: need 0 <= beta_min < beta_max < 1");
  }
  auto f = [&](int t) {
    const double c =
        std::cos((static_cast<double>(t) / steps + offset) / (1.0 + offset) *
                 std::numbers::pi / 2.0);
    return c * c;
  };
  const double f0 = f(0);
  std::vector<double> betas(steps);
  double prev = 1.0;
  for (int t = 1; t <= steps; ++t) {
    const double ab = f(t) / f0;
    betas[t - 1] = std::clamp(1.0 - ab / prev, beta_min, beta_max);
    prev = ab;
  }
  return NoiseSchedule(NoiseSchedule::Kind::kCosine, std::move(betas), beta_min, beta_max,
                       offset);
}

NoiseSchedule linear_schedule(int steps, double beta_start, double beta_end) {
  if (steps < 1) throw ArgumentError("linear_schedule: T must be >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw ArgumentError("linear_schedule: need 0 < beta_start <= beta_end < 1");
  }
  std::vector<double> betas(steps);
  for (int i = 0; i < steps; ++i) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(i) / (steps - 1);
    betas[i] = beta_start + frac * (beta_end - beta_start);
  }
  return NoiseSchedule(NoiseSchedule::Kind::kLinear, std::move(betas), beta_start, beta_end,
                       0.0);
}

double ema_gamma(long step, const EmaSchedule& schedule) {
  if (schedule.total_steps < 1) throw ArgumentError("ema_gamma: K must be >= 1");
  if (!(schedule.gamma0 >= 0.0 && schedule.gamma0 < 1.0)) {
    throw ArgumentError("ema_gamma: gamma0 must lie in [0,1)");
  }
  if (step < 0 || step > schedule.total_steps) {
    throw ArgumentError("ema_gamma: step outside [0, K]");
  }
  if (step == 0) return schedule.gamma0;
  if (step == schedule.total_steps) return 1.0;
  const double c = std::cos(std::numbers::pi * static_cast<double>(step) /
                            static_cast<double>(schedule.total_steps));
  return 1.0 - (1.0 - schedule.gamma0) * (c + 1.0) / 2.0;
}

std::vector<int> ddim_subsequence(int steps, int inference_steps) {
  if (inference_steps < 1 || inference_steps > steps) {
    throw ArgumentError("ddim_subsequence: need 1 <= S <= T");
  }
  std::vector<int> seq(inference_steps);
  for (int i = 0; i < inference_steps; ++i) {
    seq[i] = static_cast<int>((static_cast<long long>(i) + 1) * steps / inference_steps);
  }
  return seq;
}

}  // namespace radsynth

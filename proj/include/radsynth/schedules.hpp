#pragma once

#include <string>
#include <vector>

namespace radsynth {

/// Per-step noise levels for a T-step diffusion process.
///
/// Timesteps are 1-based: beta(t), alpha(t), alpha_bar(t) for t in [1, T].
/// alpha_bar(0) is defined as 1 so the last reverse step lands on clean data.
/// alpha_bar is always rebuilt as the running product of the stored alphas,
/// so alpha_bar(t) == alpha_bar(t-1) * alpha(t) holds exactly.
class NoiseSchedule {
 public:
  enum class Kind { kCosine, kLinear };

  NoiseSchedule(Kind kind, std::vector<double> betas, double beta_min, double beta_max,
                double offset);

  [[nodiscard]] int steps() const noexcept { return static_cast<int>(betas_.size()); }
  [[nodiscard]] Kind kind() const noexcept { return kind_; }
  [[nodiscard]] double beta(int t) const;
  [[nodiscard]] double alpha(int t) const;
  [[nodiscard]] double alpha_bar(int t) const;
  [[nodiscard]] double beta_min() const noexcept { return beta_min_; }
  [[nodiscard]] double beta_max() const noexcept { return beta_max_; }
  /// Cosine offset s (0 for linear schedules).
  [[nodiscard]] double offset() const noexcept { return offset_; }

  [[nodiscard]] const std::vector<double>& betas() const noexcept { return betas_; }
  [[nodiscard]] const std::vector<double>& alphas() const noexcept { return alphas_; }
  [[nodiscard]] const std::vector<double>& alpha_bars() const noexcept { return alpha_bars_; }

  /// Plain-text key/value dump: kind, T, s, clip bounds and the full beta array.
  [[nodiscard]] std::string serialize() const;
  static NoiseSchedule deserialize(const std::string& text);

 private:
  Kind kind_;
  std::vector<double> betas_;
  std::vector<double> alphas_;
  std::vector<double> alpha_bars_;
  double beta_min_;
  double beta_max_;
  double offset_;
};

NoiseSchedule cosine_schedule(int steps, double offset = 0.008, double beta_min = 0.0,
                              double beta_max = 0.999);

NoiseSchedule linear_schedule(int steps, double beta_start = 1e-4, double beta_end = 0.02);

struct EmaSchedule {
  double gamma0 = 0.995;
  long total_steps = 1;
};

/// Cosine-ramped EMA decay: gamma0 at k = 0 rising to exactly 1 at k = K.
double ema_gamma(long step, const EmaSchedule& schedule);

/// S uniformly strided timesteps in [1, T], strictly increasing, ending at T.
std::vector<int> ddim_subsequence(int steps, int inference_steps);

}  // namespace radsynth

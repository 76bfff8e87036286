#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "radsynth/image.hpp"
#include "radsynth/rng.hpp"
#include "radsynth/schedules.hpp"

namespace radsynth {

/// eps_hat(x_t, t) in the model domain. Output has the shape of x_t.
class NoisePredictor {
 public:
  virtual ~NoisePredictor() = default;
  [[nodiscard]] virtual ImageGrid predict(const ImageGrid& x_t, int t) const = 0;
  /// False if predict() must not be called concurrently.
  [[nodiscard]] virtual bool thread_safe() const { return true; }
};

struct SamplerConfig {
  double eta = 0.0;
  int inference_steps = 250;
  bool clip_denoised = true;
};

struct SampleShape {
  Resolution resolution;
  int channels = 1;
};

/// [0,1] display intensities to the [-1,1] model domain.
ImageGrid to_model_domain(const ImageGrid& display);
/// Model domain back to display intensities, clamped to [0,1].
ImageGrid to_display_domain(const ImageGrid& model);

struct NoisedSample {
  ImageGrid x_t;  // model domain
  ImageGrid eps;
};

/// q(x_t | x_0) for a display-domain x0. t in [0, T]; t = 0 returns the clean image.
NoisedSample forward_noise(const ImageGrid& x0, int t, const NoiseSchedule& sched, Rng& rng);

/// Deterministic variant on a model-domain x0 with a caller-supplied eps.
ImageGrid forward_noise_with(const ImageGrid& x0_model, int t, const NoiseSchedule& sched,
                             const ImageGrid& eps);

/// sigma_t of the generalized (eta-weighted) reverse step from t to t_prev.
double ddim_sigma(int t, int t_prev, const NoiseSchedule& sched, double eta);

/// Clean-image estimate implied by eps_hat at step t.
ImageGrid predict_x0(const ImageGrid& x_t, int t, const ImageGrid& eps_hat,
                     const NoiseSchedule& sched);

ImageGrid ddim_step(const ImageGrid& x_t, int t, int t_prev, const ImageGrid& eps_hat,
                    const NoiseSchedule& sched, const SamplerConfig& cfg, Rng& rng);

/// Ancestral posterior step x_t -> x_{t-1} with variance beta_tilde_t.
ImageGrid ddpm_step(const ImageGrid& x_t, int t, const ImageGrid& eps_hat,
                    const NoiseSchedule& sched, Rng& rng);

double ddpm_posterior_variance(int t, const NoiseSchedule& sched);

/// Full reverse walk ending at t = 0, returned in the model domain without clamping.
ImageGrid sample_model_domain(const NoisePredictor& pred, const NoiseSchedule& sched,
                              const SamplerConfig& cfg, SampleShape shape, Rng& rng);

/// Full reverse walk mapped to display intensities and clamped to [0,1].
ImageGrid sample(const NoisePredictor& pred, const NoiseSchedule& sched,
                 const SamplerConfig& cfg, SampleShape shape, Rng& rng);

/// One image per seed, each from Rng(seed). Runs on up to `threads` workers when the
/// predictor is thread safe, otherwise sequentially.
std::vector<ImageGrid> sample_batch(const NoisePredictor& pred, const NoiseSchedule& sched,
                                    const SamplerConfig& cfg, SampleShape shape,
                                    const std::vector<std::uint64_t>& seeds, int threads = 1);

/// Bayes-optimal predictor for x0 ~ N(mu, s2 I) (mu in the model domain).
class AnalyticGaussianPredictor final : public NoisePredictor {
 public:
  AnalyticGaussianPredictor(const NoiseSchedule& sched, ImageGrid mu, double s2);
  [[nodiscard]] ImageGrid predict(const ImageGrid& x_t, int t) const override;

 private:
  const NoiseSchedule* sched_;
  ImageGrid mu_;
  double s2_;
};

std::unique_ptr<NoisePredictor> analytic_gaussian_predictor(const NoiseSchedule& sched,
                                                            ImageGrid mu, double s2);

struct DiagnosticRow {
  int t = 0;
  double mean = 0.0;
  double std = 0.0;
};

/// Pixel statistics of the display-mapped x_t at each probe timestep.
std::vector<DiagnosticRow> noising_diagnostics(const ImageGrid& x0,
                                               const NoiseSchedule& sched,
                                               const std::vector<int>& probe_ts, Rng& rng);

void write_diagnostics_csv(const std::vector<DiagnosticRow>& rows, const std::string& path);

/// File name used for sample dumps: "{seed}_{step}.png".
std::string sample_filename(std::uint64_t seed, int step);

}  // namespace radsynth

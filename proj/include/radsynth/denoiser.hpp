#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "radsynth/diffusion.hpp"
#include "radsynth/nn/gradcheck.hpp"
#include "radsynth/nn/optim.hpp"
#include "radsynth/schedules.hpp"

namespace radsynth {

struct DenoiserConfig {
  /// Channel widths per resolution level, strictly increasing.
  std::vector<int> widths{16, 32, 64};
  int channels = 1;
  /// Rows of the learned per-timestep embedding table (the schedule length T).
  int timesteps = 1000;
  int attention_heads = 1;
  std::uint64_t seed = 0;
};

/// Small U-Net noise predictor: residual blocks on every level, a learned
/// per-timestep embedding added as a channel bias inside each block, and one
/// global self-attention layer at the lowest resolution.
class ToyDenoiser {
 public:
  explicit ToyDenoiser(DenoiserConfig config);

  /// x: [C,H,W] model-domain input; H and W divisible by 2^(levels-1). t in [1, T].
  [[nodiscard]] nn::Var forward(const nn::Var& x, int t) const;
  /// Tape-free prediction.
  [[nodiscard]] ImageGrid predict(const ImageGrid& x_t, int t) const;
  [[nodiscard]] std::vector<ImageGrid> predict_batch(const std::vector<ImageGrid>& xs,
                                                     const std::vector<int>& ts) const;

  [[nodiscard]] const nn::ParamList& params() const noexcept { return params_; }
  [[nodiscard]] const DenoiserConfig& config() const noexcept { return config_; }
  [[nodiscard]] int levels() const noexcept { return static_cast<int>(config_.widths.size()); }

  [[nodiscard]] std::vector<nn::Tensor> weights() const;
  void set_weights(const std::vector<nn::Tensor>& weights);

 private:
  struct ResBlock {
    nn::Var conv1_w, conv1_b, conv2_w, conv2_b, temb_w, temb_b, skip_w, skip_b;
  };
  struct Attention {
    nn::Var norm_g, norm_b, q_w, k_w, v_w, proj_w, proj_b;
  };

  nn::Var param(const std::string& name, nn::Tensor init);
  ResBlock make_block(const std::string& name, int in, int out, Rng& rng);
  nn::Var run_block(const ResBlock& b, const nn::Var& x, const nn::Var& temb) const;

  DenoiserConfig config_;
  nn::ParamList params_;
  nn::Var temb_table_;
  nn::Var in_w_, in_b_;
  std::vector<ResBlock> enc_;
  ResBlock mid_;
  Attention attn_;
  std::vector<ResBlock> dec_;
  nn::Var out_w_, out_b_;
};

/// NoisePredictor view of a (frozen) denoiser.
class DenoiserPredictor final : public NoisePredictor {
 public:
  explicit DenoiserPredictor(const ToyDenoiser& net) : net_(&net) {}
  [[nodiscard]] ImageGrid predict(const ImageGrid& x_t, int t) const override {
    return net_->predict(x_t, t);
  }

 private:
  const ToyDenoiser* net_;
};

struct EmaParams {
  nn::EmaShadow shadow;
  EmaSchedule schedule;
};

/// shadow <- gamma_k * shadow + (1 - gamma_k) * live, gamma_k = ema_gamma(min(k, K)).
void ema_update(EmaParams& ema, const nn::ParamList& params, long k);

/// A fully specified training example: clean image (display domain), timestep and noise.
struct NoisyExample {
  ImageGrid x0;
  int t = 1;
  ImageGrid eps;
};

struct TrainStats {
  long step = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
  double gamma = 0.0;
};

class DenoiserTrainer {
 public:
  DenoiserTrainer(ToyDenoiser& net, nn::AdamWConfig opt, EmaSchedule ema);

  /// Draws t ~ U{1..T} and eps ~ N(0, I) per item, then trains on them.
  TrainStats train_step(const std::vector<ImageGrid>& batch, const NoiseSchedule& sched,
                        Rng& rng);
  /// Mean L1 noise loss over the examples, backprop, clip, AdamW, EMA.
  TrainStats train_on(const std::vector<NoisyExample>& examples, const NoiseSchedule& sched);

  [[nodiscard]] ToyDenoiser& net() noexcept { return *net_; }
  [[nodiscard]] nn::AdamW& optimizer() noexcept { return opt_; }
  [[nodiscard]] EmaParams& ema() noexcept { return ema_; }
  [[nodiscard]] const EmaParams& ema() const noexcept { return ema_; }
  [[nodiscard]] long updates() const noexcept { return updates_; }

 private:
  ToyDenoiser* net_;
  nn::AdamW opt_;
  EmaParams ema_;
  long updates_ = 0;
};

/// Mean |eps_hat - eps| over the examples, no tape.
double noise_l1_loss(const ToyDenoiser& net, const std::vector<NoisyExample>& examples,
                     const NoiseSchedule& sched);

/// Finite-difference check of the smoothed-L1 noise loss at one probe.
nn::GradCheckResult grad_check(const ToyDenoiser& net, const NoisyExample& probe,
                               const NoiseSchedule& sched, double epsilon = 1e-4,
                               int samples = 120, const std::string& prefix = "",
                               double delta = 1e-8, std::uint64_t seed = 7);

void write_loss_csv(const std::vector<TrainStats>& rows, const std::string& path);

void save_denoiser(const std::string& path, const ToyDenoiser& net, const EmaParams* ema,
                   const NoiseSchedule* sched = nullptr);
/// Rebuilds the network; use_ema selects the shadow weights when present.
ToyDenoiser load_denoiser(const std::string& path, bool use_ema = true);

}  // namespace radsynth

#pragma once

#include <vector>

#include "radsynth/nn/autograd.hpp"

namespace radsynth::nn {

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;
  /// Global gradient-norm clip threshold.
  double clip_norm = 1.0;
};

/// L2 norm of all parameter gradients taken together.
double global_grad_norm(const ParamList& params);

/// Rescales gradients so their global norm is at most max_norm. Returns the norm before clipping.
double clip_grad_norm(const ParamList& params, double max_norm);

/// AdamW with decoupled weight decay.
class AdamW {
 public:
  AdamW(const ParamList& params, AdamWConfig config);

  /// Applies one update from the current gradients. A step whose gradients are
  /// all zero (including everything clipped away by a zero threshold) leaves
  /// the weights and moments untouched and is not counted.
  void step();

  [[nodiscard]] long step_count() const noexcept { return steps_; }
  [[nodiscard]] const AdamWConfig& config() const noexcept { return config_; }
  AdamWConfig& config() noexcept { return config_; }
  [[nodiscard]] const std::vector<Tensor>& first_moments() const noexcept { return m_; }
  [[nodiscard]] const std::vector<Tensor>& second_moments() const noexcept { return v_; }

 private:
  ParamList params_;
  AdamWConfig config_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  long steps_ = 0;
};

/// Shadow copy of a parameter list.
class EmaShadow {
 public:
  explicit EmaShadow(const ParamList& params);

  /// shadow <- gamma * shadow + (1 - gamma) * live
  void update(const ParamList& params, double gamma);

  [[nodiscard]] const std::vector<Tensor>& weights() const noexcept { return shadow_; }
  std::vector<Tensor>& weights() noexcept { return shadow_; }

 private:
  std::vector<Tensor> shadow_;
};

}  // namespace radsynth::nn

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "radsynth/image.hpp"
#include "radsynth/nn/attention.hpp"
#include "radsynth/nn/autograd.hpp"
#include "radsynth/nn/spectral.hpp"
#include "radsynth/rng.hpp"

namespace radsynth {

/// Non-overlapping window tiles of a [C,H,W] map, edge-padded to a multiple of the window.
struct WindowPartition {
  std::vector<nn::Tensor> windows;  // each [C, window, window], raster order
  int window = 0;
  int rows = 0;
  int cols = 0;
  int height = 0;  // unpadded
  int width = 0;
};

WindowPartition window_partition(const nn::Tensor& features, int window);
/// Reassembles the tiles and crops away the padding.
nn::Tensor window_merge(const WindowPartition& partition);

/// Scaled dot-product attention inside each window independently.
std::vector<nn::Tensor> window_attention(const std::vector<nn::Tensor>& q,
                                         const std::vector<nn::Tensor>& k,
                                         const std::vector<nn::Tensor>& v, int heads,
                                         std::vector<nn::Tensor>* probs = nullptr);
/// Self-attention with q = k = v = the window contents.
std::vector<nn::Tensor> window_attention(const std::vector<nn::Tensor>& windows, int heads);

/// Key/value enlargement per side for a window and overlap ratio.
int overlap_pad(int window, double overlap_ratio);

/// Queries from plain windows, keys/values from windows enlarged by
/// overlap_pad() on every side (edge-clamped).
nn::Tensor overlapping_cross_attention(const nn::Tensor& q, const nn::Tensor& k,
                                       const nn::Tensor& v, int window, double overlap_ratio,
                                       int heads, std::vector<nn::Tensor>* probs = nullptr);

/// (C*s*s, H, W) -> (C, s*H, s*W).
nn::Tensor pixel_shuffle_upsample(const nn::Tensor& features, int scale);

struct SRGeneratorConfig {
  int channels = 1;
  int embed_dim = 32;
  int window = 4;
  double overlap_ratio = 0.5;
  int n_groups = 2;
  int blocks_per_group = 2;
  int heads = 2;
  int mlp_ratio = 2;
  /// Primary upscaling factor.
  int scale = 4;
  /// Extra upsampling heads sharing the body, used for multi-scale pair pools.
  std::vector<int> extra_scales;
  /// Largest accepted output (scale * input) in each dimension.
  int max_output_height = 1024;
  int max_output_width = 1024;
  std::uint64_t seed = 0;

  void validate() const;
  [[nodiscard]] std::vector<int> scales() const;
};

/// Hybrid-attention SR generator: shallow conv, residual hybrid attention groups,
/// pixel-shuffle upsampling, reconstruction conv.
class SRGenerator {
 public:
  explicit SRGenerator(SRGeneratorConfig config);

  /// Unclamped differentiable forward. x: [C,H,W] in [0,1]; scale 0 selects the primary scale.
  [[nodiscard]] nn::Var forward(const nn::Var& x, int scale = 0) const;
  /// One residual hybrid attention group. residual = false drops the group skip (ablation).
  [[nodiscard]] nn::Var group_forward(int group, const nn::Var& x, bool residual = true) const;

  [[nodiscard]] const nn::ParamList& params() const noexcept { return params_; }
  [[nodiscard]] const SRGeneratorConfig& config() const noexcept { return config_; }
  /// Parameters whose name starts with prefix.
  [[nodiscard]] nn::ParamList params_with_prefix(const std::string& prefix) const;

 private:
  struct HybridBlock {
    nn::Var ln1_g, ln1_b, q_w, k_w, v_w, proj_w, proj_b;
    nn::Var cab1_w, cab1_b, cab2_w, cab2_b, se1_w, se1_b, se2_w, se2_b;
    nn::Var ln2_g, ln2_b, fc1_w, fc1_b, fc2_w, fc2_b;
  };
  struct OverlapBlock {
    nn::Var ln1_g, ln1_b, q_w, k_w, v_w, proj_w, proj_b;
    nn::Var ln2_g, ln2_b, fc1_w, fc1_b, fc2_w, fc2_b;
  };
  struct Group {
    std::vector<HybridBlock> blocks;
    OverlapBlock overlap;
    nn::Var conv_w, conv_b;
  };
  struct Upsampler {
    std::vector<std::pair<nn::Var, nn::Var>> stages;
    std::vector<int> factors;
    nn::Var last_w, last_b;
  };

  nn::Var param(const std::string& name, nn::Tensor init);
  nn::Var run_hybrid(const HybridBlock& b, const nn::Var& x) const;
  nn::Var run_overlap(const OverlapBlock& b, const nn::Var& x) const;
  nn::Var run_mlp(const nn::Var& x, const nn::Var& g, const nn::Var& bias, const nn::Var& w1,
                  const nn::Var& b1, const nn::Var& w2, const nn::Var& b2) const;

  SRGeneratorConfig config_;
  nn::ParamList params_;
  nn::Var first_w_, first_b_;
  std::vector<Group> groups_;
  nn::Var body_w_, body_b_;
  nn::Var pre_w_, pre_b_;
  std::map<int, Upsampler> heads_;
};

/// Clamped [0,1] super-resolved image.
ImageGrid sr_forward(const SRGenerator& gen, const ImageGrid& lr, int scale = 0);

struct DiscriminatorConfig {
  int channels = 1;
  int base_channels = 16;
  int depth = 3;
  int sn_power_iters = 1;
  std::uint64_t seed = 1;

  void validate() const;
};

/// U-Net discriminator with per-pixel realness logits; every conv weight is
/// spectrally normalized before use.
class Discriminator {
 public:
  explicit Discriminator(DiscriminatorConfig config);

  /// x: [C,H,W], H and W divisible by 2^depth. update_sn refreshes the power iteration.
  [[nodiscard]] nn::Var forward(const nn::Var& x, bool update_sn = true);
  /// Logit map [1,H,W] as an image, no tape.
  [[nodiscard]] ImageGrid realness(const ImageGrid& image, bool update_sn = false);

  [[nodiscard]] const nn::ParamList& params() const noexcept { return params_; }
  [[nodiscard]] const DiscriminatorConfig& config() const noexcept { return config_; }
  [[nodiscard]] const std::vector<nn::SpectralState>& spectral_states() const noexcept {
    return states_;
  }
  [[nodiscard]] std::vector<nn::SpectralState>& spectral_states() noexcept { return states_; }

 private:
  struct Conv {
    nn::Var w, b;
    std::size_t state = 0;
  };
  Conv make_conv(const std::string& name, int out, int in, int k, Rng& rng);
  nn::Var run_conv(const Conv& c, const nn::Var& x, bool update);

  DiscriminatorConfig config_;
  nn::ParamList params_;
  std::vector<nn::SpectralState> states_;
  Conv in_;
  std::vector<Conv> down_;
  std::vector<Conv> up_;
  Conv head1_, head2_;
};

void save_generator(const std::string& path, const SRGenerator& gen);
SRGenerator load_generator(const std::string& path);
void save_discriminator(const std::string& path, const Discriminator& disc);
Discriminator load_discriminator(const std::string& path);

}  // namespace radsynth

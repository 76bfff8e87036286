#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "radsynth/degradation.hpp"
#include "radsynth/nn/optim.hpp"
#include "radsynth/sr_model.hpp"

namespace radsynth {

struct LossWeights {
  double pixel = 1.0;
  double perceptual = 1.0;
  double adversarial = 0.1;

  void validate() const;
};

/// Feature maps at one or more layers; must be deterministic.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  [[nodiscard]] virtual std::vector<nn::Var> features(const nn::Var& image) const = 0;
};

class IdentityExtractor final : public FeatureExtractor {
 public:
  [[nodiscard]] std::vector<nn::Var> features(const nn::Var& image) const override {
    return {image};
  }
};

/// Fixed random conv + ReLU + 2x average-pool stages; weights never train.
class ToyConvExtractor final : public FeatureExtractor {
 public:
  explicit ToyConvExtractor(int channels = 1, std::vector<int> widths = {8, 16, 32},
                            std::uint64_t seed = 1234);
  [[nodiscard]] std::vector<nn::Var> features(const nn::Var& image) const override;

 private:
  std::vector<nn::Var> weights_;
};

/// Mean absolute difference.
double l1_loss(const ImageGrid& gen, const ImageGrid& gt);
/// Sum over layers of the mean squared feature difference.
double perceptual_loss(const FeatureExtractor& phi, const ImageGrid& gen, const ImageGrid& gt);
nn::Var perceptual_loss(const FeatureExtractor& phi, const nn::Var& gen, const nn::Var& gt);

/// mean softplus(-real) + mean softplus(fake): the discriminator objective.
double gan_loss_discriminator(const ImageGrid& d_real, const ImageGrid& d_fake);
nn::Var gan_loss_discriminator(const nn::Var& d_real, const nn::Var& d_fake);
/// Non-saturating generator objective: mean softplus(-fake).
double gan_loss_generator(const ImageGrid& d_fake);
nn::Var gan_loss_generator(const nn::Var& d_fake);

double total_loss(const LossWeights& w, double l1, double lp, double lg);

double psnr(const ImageGrid& a, const ImageGrid& b, double peak = 1.0);

struct SrStepStats {
  long step = 0;
  double l1 = 0.0;
  double lp = 0.0;
  double lg = 0.0;
  double total = 0.0;
  double d_loss = 0.0;
};

class SrTrainer {
 public:
  SrTrainer(SRGenerator& gen, Discriminator& disc, const FeatureExtractor& phi, LossWeights w,
            nn::AdamWConfig gen_opt, nn::AdamWConfig disc_opt);

  /// One discriminator update on (real HR, generated HR), then one generator update.
  SrStepStats step(const std::vector<DegradedPair>& batch);
  /// Draws the batch from the pool first.
  SrStepStats step(const PairPool& pool, const std::vector<ImageGrid>& hr_corpus, Rng& rng,
                   int batch_size = 1);

  [[nodiscard]] long steps() const noexcept { return steps_; }
  [[nodiscard]] nn::AdamW& gen_optimizer() noexcept { return gen_opt_; }
  [[nodiscard]] nn::AdamW& disc_optimizer() noexcept { return disc_opt_; }

 private:
  SRGenerator* gen_;
  Discriminator* disc_;
  const FeatureExtractor* phi_;
  LossWeights weights_;
  nn::AdamW gen_opt_;
  nn::AdamW disc_opt_;
  long steps_ = 0;
};

void write_sr_loss_csv(const std::vector<SrStepStats>& rows, const std::string& path);

}  // namespace radsynth

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "radsynth/image.hpp"
#include "radsynth/rng.hpp"

namespace radsynth {

struct DegradationRecipe {
  /// Photons per unit intensity; +infinity disables shot noise.
  double poisson_scale = 200.0;
  int jpeg_quality = 75;
  double blur_sigma = 1.0;
  int blur_kernel = 7;
  double gauss_sigma = 0.02;
  int scale = 4;
  std::uint64_t seed = 0;

  /// Throws ArgumentError when an invariant is violated.
  void validate() const;
  [[nodiscard]] std::string serialize() const;
  static DegradationRecipe deserialize(const std::string& text);

  friend bool operator==(const DegradationRecipe&, const DegradationRecipe&) = default;
};

/// k ~ Poisson(scale * p), output k / scale, clamped to [0,1].
ImageGrid poisson_noise(const ImageGrid& grid, double scale, Rng& rng);

/// Quantization table for one quality level (IJG scaling of the standard luminance table).
std::array<int, 64> jpeg_quant_table(int quality);

/// Blockwise 8x8 DCT quantize/dequantize round trip on the 0..255 scale, per channel.
/// Partial edge blocks are padded by edge replication.
ImageGrid jpeg_compress(const ImageGrid& grid, int quality);

/// Normalized Gaussian taps for an odd kernel size; sigma 0 gives a unit impulse.
std::vector<double> gaussian_kernel(double sigma, int kernel);

/// Separable normalized Gaussian convolution with edge clamping.
ImageGrid gaussian_blur(const ImageGrid& grid, double sigma, int kernel);

/// Adds i.i.d. N(0, sigma^2) per sample and clamps to [0,1].
ImageGrid gaussian_noise(const ImageGrid& grid, double sigma, Rng& rng);

struct DegradedPair {
  ImageGrid hr;
  ImageGrid lr;
  int scale = 0;
};

/// Poisson -> JPEG -> blur -> Gaussian noise -> Lanczos downscale.
DegradedPair degrade_pair(const ImageGrid& hr, const DegradationRecipe& recipe, Rng& rng);
/// Same, driven by the recipe's own seed.
DegradedPair degrade_pair(const ImageGrid& hr, const DegradationRecipe& recipe);

struct WeightedRecipe {
  DegradationRecipe recipe;
  double weight = 1.0;
};

class PairPool {
 public:
  PairPool() = default;
  PairPool(std::vector<WeightedRecipe> recipes, std::size_t capacity = 0);

  [[nodiscard]] const std::vector<WeightedRecipe>& recipes() const noexcept { return recipes_; }
  [[nodiscard]] std::size_t capacity() const noexcept { return capacity_; }
  [[nodiscard]] bool empty() const noexcept { return recipes_.empty(); }

  /// Index of a recipe chosen with probability proportional to its weight.
  [[nodiscard]] std::size_t pick(Rng& rng) const;

 private:
  std::vector<WeightedRecipe> recipes_;
  std::size_t capacity_ = 0;
};

/// Pool spanning scales 2, 3 and 4 with equal weight and the given base recipe.
PairPool multiscale_pool(const DegradationRecipe& base, std::size_t capacity = 0);

struct PoolDraw {
  DegradedPair pair;
  std::size_t recipe_index = 0;
  std::size_t image_index = 0;
};

/// Top-left crop to the largest size divisible by scale in both dimensions.
ImageGrid crop_to_multiple(const ImageGrid& hr, int scale);

/// Picks a recipe and an image, crops the image to a multiple of the recipe's scale and degrades it.
PoolDraw pool_draw(const PairPool& pool, const std::vector<ImageGrid>& hr_corpus, Rng& rng);

/// Writes {id}_hr.png and {id}_x{scale}.png (16-bit) into dir.
void write_pair(const DegradedPair& pair, const std::string& dir, const std::string& id);

}  // namespace radsynth

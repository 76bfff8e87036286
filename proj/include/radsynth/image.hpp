#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace radsynth {

struct Resolution {
  int width = 0;
  int height = 0;

  friend bool operator==(const Resolution&, const Resolution&) = default;
};

/// Row-major H x W x C grid of real intensities.
///
/// Display-domain images hold values in [0,1]; the diffusion code also stores
/// model-domain values ([-1,1] and beyond) in the same container, so the
/// range is only enforced by clamp() and by operations documented to clamp.
class ImageGrid {
 public:
  ImageGrid() = default;
  ImageGrid(int height, int width, int channels = 1, double fill = 0.0);
  ImageGrid(int height, int width, int channels, std::vector<double> data);

  [[nodiscard]] int height() const noexcept { return height_; }
  [[nodiscard]] int width() const noexcept { return width_; }
  [[nodiscard]] int channels() const noexcept { return channels_; }
  [[nodiscard]] Resolution resolution() const noexcept { return {width_, height_}; }
  [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
  [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

  [[nodiscard]] double& at(int y, int x, int c = 0) noexcept {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }
  [[nodiscard]] double at(int y, int x, int c = 0) const noexcept {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }

  [[nodiscard]] std::span<double> values() noexcept { return data_; }
  [[nodiscard]] std::span<const double> values() const noexcept { return data_; }
  [[nodiscard]] const std::vector<double>& data() const noexcept { return data_; }

  [[nodiscard]] bool same_shape(const ImageGrid& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_ &&
           channels_ == other.channels_;
  }

  /// Clamp every sample into [lo, hi] in place.
  ImageGrid& clamp(double lo = 0.0, double hi = 1.0) noexcept;

  friend bool operator==(const ImageGrid&, const ImageGrid&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

struct PixelStats {
  double mean = 0.0;
  double std = 0.0;
  double min = 0.0;
  double max = 0.0;
};

enum class BitDepth { k8 = 8, k16 = 16 };

/// PNG files directly inside dir, sorted by name.
std::vector<std::string> list_png_files(const std::string& dir);

ImageGrid load_png(const std::string& path);
void save_png(const ImageGrid& grid, const std::string& path, BitDepth depth = BitDepth::k8);

/// Encode to PNG bytes in memory (used by the study service and for hashing).
std::vector<unsigned char> encode_png(const ImageGrid& grid, BitDepth depth = BitDepth::k8);
ImageGrid decode_png(std::span<const unsigned char> bytes);

/// Integer sample for an intensity: round-half-away-from-zero of v * max after clamping.
unsigned quantize(double v, unsigned max_value) noexcept;

/// Separable Lanczos-windowed sinc resampling with edge clamping. Output clamped to [0,1].
ImageGrid resize_lanczos(const ImageGrid& grid, Resolution target, int lobes = 3);

ImageGrid crop(const ImageGrid& grid, int x0, int y0, int w, int h);

/// Average of channels; single-channel input is returned unchanged.
ImageGrid to_grayscale(const ImageGrid& grid);

/// Population statistics over every sample. Throws on an empty grid.
PixelStats pixel_stats(const ImageGrid& grid);

}  // namespace radsynth

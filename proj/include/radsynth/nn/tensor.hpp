#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#include "radsynth/image.hpp"

namespace radsynth::nn {

/// Dense row-major tensor of doubles. Feature maps use the [C, H, W] layout.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape, double fill = 0.0);
  Tensor(std::vector<int> shape, std::vector<double> data);

  static Tensor chw(int c, int h, int w, double fill = 0.0) { return Tensor({c, h, w}, fill); }
  static Tensor scalar(double v) { return Tensor({1}, v); }

  [[nodiscard]] const std::vector<int>& shape() const noexcept { return shape_; }
  [[nodiscard]] int rank() const noexcept { return static_cast<int>(shape_.size()); }
  [[nodiscard]] int dim(int i) const noexcept { return shape_[i]; }
  [[nodiscard]] std::size_t numel() const noexcept { return data_.size(); }
  [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

  [[nodiscard]] double* data() noexcept { return data_.data(); }
  [[nodiscard]] const double* data() const noexcept { return data_.data(); }
  [[nodiscard]] std::span<double> values() noexcept { return data_; }
  [[nodiscard]] std::span<const double> values() const noexcept { return data_; }
  [[nodiscard]] std::vector<double>& storage() noexcept { return data_; }
  [[nodiscard]] const std::vector<double>& storage() const noexcept { return data_; }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  // [C, H, W] accessors.
  [[nodiscard]] int channels() const noexcept { return shape_[0]; }
  [[nodiscard]] int height() const noexcept { return shape_[1]; }
  [[nodiscard]] int width() const noexcept { return shape_[2]; }
  double& at(int c, int y, int x) noexcept {
    return data_[(static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x];
  }
  double at(int c, int y, int x) const noexcept {
    return data_[(static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x];
  }

  void fill(double v) noexcept;
  [[nodiscard]] bool same_shape(const Tensor& o) const noexcept { return shape_ == o.shape_; }
  /// Same data, new shape with equal element count.
  [[nodiscard]] Tensor reshaped(std::vector<int> shape) const;

  Tensor& operator+=(const Tensor& o);
  Tensor& operator*=(double s) noexcept;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

/// Image [H, W, C] interleaved -> tensor [C, H, W].
Tensor from_image(const ImageGrid& image);
/// Tensor [C, H, W] -> image, no clamping.
ImageGrid to_image(const Tensor& t);

}  // namespace radsynth::nn

#include "radsynth/nn/tensor.hpp"

#include <functional>
#include <numeric>

#include "radsynth/errors.hpp"

namespace radsynth::nn {

namespace {
std::size_t count(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ArgumentError("Tensor: negative dimension");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}
}  // namespace

Tensor::Tensor(std::vector<int> shape, double fill)
    : shape_(std::move(shape)), data_(count(shape_), fill) {}

Tensor::Tensor(std::vector<int> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != count(shape_)) throw ArgumentError("Tensor: data/shape mismatch");
}

void Tensor::fill(double v) noexcept { std::fill(data_.begin(), data_.end(), v); }

Tensor Tensor::reshaped(std::vector<int> shape) const {
  if (count(shape) != data_.size()) throw ArgumentError("Tensor::reshaped: size mismatch");
  return Tensor(std::move(shape), data_);
}

Tensor& Tensor::operator+=(const Tensor& o) {
  if (o.data_.size() != data_.size()) throw ArgumentError("Tensor +=: size mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double s) noexcept {
  for (double& v : data_) v *= s;
  return *this;
}

Tensor from_image(const ImageGrid& image) {
  Tensor t = Tensor::chw(image.channels(), image.height(), image.width());
  for (int c = 0; c < image.channels(); ++c)
    for (int y = 0; y < image.height(); ++y)
      for (int x = 0; x < image.width(); ++x) t.at(c, y, x) = image.at(y, x, c);
  return t;
}

ImageGrid to_image(const Tensor& t) {
  if (t.rank() != 3) throw ArgumentError("to_image: expected [C,H,W]");
  ImageGrid g(t.height(), t.width(), t.channels());
  for (int c = 0; c < t.channels(); ++c)
    for (int y = 0; y < t.height(); ++y)
      for (int x = 0; x < t.width(); ++x) g.at(y, x, c) = t.at(c, y, x);
  return g;
}

}  // namespace radsynth::nn

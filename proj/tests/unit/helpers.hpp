#pragma once

#include <cmath>
#include <filesystem>
#include <string>

#include "radsynth/image.hpp"
#include "radsynth/nn/tensor.hpp"
#include "radsynth/rng.hpp"

namespace testing {

inline radsynth::ImageGrid random_image(int h, int w, std::uint64_t seed, int c = 1) {
  radsynth::ImageGrid g(h, w, c);
  radsynth::Rng rng(seed);
  for (double& v : g.values()) v = rng.uniform();
  return g;
}

inline radsynth::nn::Tensor random_tensor(std::vector<int> shape, std::uint64_t seed,
                                          double scale = 1.0) {
  radsynth::nn::Tensor t(std::move(shape));
  radsynth::Rng rng(seed);
  for (double& v : t.values()) v = scale * rng.normal();
  return t;
}

inline double max_abs_diff(const radsynth::ImageGrid& a, const radsynth::ImageGrid& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

inline double max_abs_diff(const radsynth::nn::Tensor& a, const radsynth::nn::Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("radsynth_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace testing

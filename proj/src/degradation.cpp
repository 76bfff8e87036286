#include "radsynth/degradation.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>

#include "radsynth/errors.hpp"

namespace radsynth {

namespace {

constexpr std::array<int, 64> kLuminance = {
    16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
    14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
    18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};

// Orthonormal 8-point DCT-II basis: basis[u][x].
const std::array<std::array<double, 8>, 8>& dct_basis() {
  static const auto basis = [] {
    std::array<std::array<double, 8>, 8> b{};
    for (int u = 0; u < 8; ++u) {
      const double cu = u == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
      for (int x = 0; x < 8; ++x) {
        b[u][x] = cu * std::cos((2 * x + 1) * u * std::numbers::pi / 16.0);
      }
    }
    return b;
  }();
  return basis;
}

void dct_block(const double in[64], double out[64]) {
  const auto& b = dct_basis();
  double tmp[64];
  for (int y = 0; y < 8; ++y) {
    for (int u = 0; u < 8; ++u) {
      double s = 0.0;
      for (int x = 0; x < 8; ++x) s += b[u][x] * in[y * 8 + x];
      tmp[y * 8 + u] = s;
    }
  }
  for (int v = 0; v < 8; ++v) {
    for (int u = 0; u < 8; ++u) {
      double s = 0.0;
      for (int y = 0; y < 8; ++y) s += b[v][y] * tmp[y * 8 + u];
      out[v * 8 + u] = s;
    }
  }
}

void idct_block(const double in[64], double out[64]) {
  const auto& b = dct_basis();
  double tmp[64];
  for (int v = 0; v < 8; ++v) {
    for (int x = 0; x < 8; ++x) {
      double s = 0.0;
      for (int u = 0; u < 8; ++u) s += b[u][x] * in[v * 8 + u];
      tmp[v * 8 + x] = s;
    }
  }
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      double s = 0.0;
      for (int v = 0; v < 8; ++v) s += b[v][y] * tmp[v * 8 + x];
      out[y * 8 + x] = s;
    }
  }
}

void check_unit(const ImageGrid& grid, const char* op) {
  if (grid.empty()) throw ArgumentError(std::string(op) + ": empty grid");
}

}  // namespace

void DegradationRecipe::validate() const {
  if (!(poisson_scale > 0.0)) throw ArgumentError("recipe: poisson_scale must be > 0");
  if (jpeg_quality < 1 || jpeg_quality > 100) {
    throw ArgumentError("recipe: jpeg_quality must lie in [1,100]");
  }
  if (!(blur_sigma >= 0.0)) throw ArgumentError("recipe: blur_sigma must be >= 0");
  if (blur_kernel < 3 || blur_kernel % 2 == 0) {
    throw ArgumentError("recipe: blur_kernel must be odd and >= 3");
  }
  if (!(gauss_sigma >= 0.0)) throw ArgumentError("recipe: gauss_sigma must be >= 0");
  if (scale < 2 || scale > 4) throw ArgumentError("recipe: scale must be 2, 3 or 4");
}

std::string DegradationRecipe::serialize() const {
  std::ostringstream out;
  out.precision(17);
  out << "poisson_scale=" << poisson_scale << '\n'
      << "jpeg_quality=" << jpeg_quality << '\n'
      << "blur_sigma=" << blur_sigma << '\n'
      << "blur_kernel=" << blur_kernel << '\n'
      << "gauss_sigma=" << gauss_sigma << '\n'
      << "scale=" << scale << '\n'
      << "seed=" << seed << '\n';
  return out.str();
}

DegradationRecipe DegradationRecipe::deserialize(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ArgumentError("recipe: malformed line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  DegradationRecipe r;
  try {
    for (const auto& [k, v] : kv) {
      if (k == "poisson_scale") r.poisson_scale = std::stod(v);
      else if (k == "jpeg_quality") r.jpeg_quality = std::stoi(v);
      else if (k == "blur_sigma") r.blur_sigma = std::stod(v);
      else if (k == "blur_kernel") r.blur_kernel = std::stoi(v);
      else if (k == "gauss_sigma") r.gauss_sigma = std::stod(v);
      else if (k == "scale") r.scale = std::stoi(v);
      else if (k == "seed") r.seed = std::stoull(v);
      else throw ArgumentError("recipe: unknown key '" + k + "'");
    }
  } catch (const std::logic_error& e) {
    if (dynamic_cast<const ArgumentError*>(&e)) throw;
    throw ArgumentError(std::string("recipe: bad value: ") + e.what());
  }
  r.validate();
  return r;
}

ImageGrid poisson_noise(const ImageGrid& grid, double scale, Rng& rng) {
  if (!(scale > 0.0)) throw ArgumentError("poisson_noise: scale must be > 0");
  ImageGrid out = grid;
  if (std::isinf(scale)) return out.clamp();
  for (double& v : out.values()) {
    const double mean = scale * std::clamp(v, 0.0, 1.0);
    v = static_cast<double>(rng.poisson(mean)) / scale;
  }
  return out.clamp();
}

std::array<int, 64> jpeg_quant_table(int quality) {
  if (quality < 1 || quality > 100) throw ArgumentError("jpeg: quality must lie in [1,100]");
  const int s = quality < 50 ? 5000 / quality : 200 - 2 * quality;
  std::array<int, 64> q{};
  for (int i = 0; i < 64; ++i) q[i] = std::clamp((kLuminance[i] * s + 50) / 100, 1, 255);
  return q;
}

ImageGrid jpeg_compress(const ImageGrid& grid, int quality) {
  check_unit(grid, "jpeg_compress");
  const auto q = jpeg_quant_table(quality);
  const int h = grid.height(), w = grid.width(), nc = grid.channels();
  ImageGrid out(h, w, nc);
  double block[64], coef[64];
  for (int c = 0; c < nc; ++c) {
    for (int by = 0; by < h; by += 8) {
      for (int bx = 0; bx < w; bx += 8) {
        for (int y = 0; y < 8; ++y) {
          const int sy = std::min(by + y, h - 1);
          for (int x = 0; x < 8; ++x) {
            const int sx = std::min(bx + x, w - 1);
            block[y * 8 + x] = std::clamp(grid.at(sy, sx, c), 0.0, 1.0) * 255.0 - 128.0;
          }
        }
        dct_block(block, coef);
        for (int i = 0; i < 64; ++i) coef[i] = std::round(coef[i] / q[i]) * q[i];
        idct_block(coef, block);
        for (int y = 0; y < 8 && by + y < h; ++y) {
          for (int x = 0; x < 8 && bx + x < w; ++x) {
            out.at(by + y, bx + x, c) = (block[y * 8 + x] + 128.0) / 255.0;
          }
        }
      }
    }
  }
  return out.clamp();
}

std::vector<double> gaussian_kernel(double sigma, int kernel) {
  if (kernel < 3 || kernel % 2 == 0) throw ArgumentError("gaussian_blur: kernel must be odd and >= 3");
  if (!(sigma >= 0.0)) throw ArgumentError("gaussian_blur: sigma must be >= 0");
  const int r = kernel / 2;
  std::vector<double> taps(kernel, 0.0);
  if (sigma == 0.0) {
    taps[r] = 1.0;
    return taps;
  }
  double total = 0.0;
  for (int i = -r; i <= r; ++i) {
    taps[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
    total += taps[i + r];
  }
  for (double& t : taps) t /= total;
  return taps;
}

ImageGrid gaussian_blur(const ImageGrid& grid, double sigma, int kernel) {
  const auto taps = gaussian_kernel(sigma, kernel);
  check_unit(grid, "gaussian_blur");
  const int h = grid.height(), w = grid.width(), nc = grid.channels(), r = kernel / 2;
  ImageGrid tmp(h, w, nc), out(h, w, nc);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < nc; ++c) {
        double s = 0.0;
        for (int i = -r; i <= r; ++i) s += taps[i + r] * grid.at(y, std::clamp(x + i, 0, w - 1), c);
        tmp.at(y, x, c) = s;
      }
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < nc; ++c) {
        double s = 0.0;
        for (int i = -r; i <= r; ++i) s += taps[i + r] * tmp.at(std::clamp(y + i, 0, h - 1), x, c);
        out.at(y, x, c) = s;
      }
    }
  }
  return out;
}

ImageGrid gaussian_noise(const ImageGrid& grid, double sigma, Rng& rng) {
  if (!(sigma >= 0.0)) throw ArgumentError("gaussian_noise: sigma must be >= 0");
  ImageGrid out = grid;
  if (sigma == 0.0) return out.clamp();
  for (double& v : out.values()) v += sigma * rng.normal();
  return out.clamp();
}

DegradedPair degrade_pair(const ImageGrid& hr, const DegradationRecipe& recipe, Rng& rng) {
  recipe.validate();
  check_unit(hr, "degrade_pair");
  if (hr.height() % recipe.scale || hr.width() % recipe.scale) {
    throw ArgumentError("degrade_pair: HR dims not divisible by scale " +
                        std::to_string(recipe.scale));
  }
  Rng shot = rng.derive("poisson");
  Rng read = rng.derive("gaussian");
  rng();
  ImageGrid x = poisson_noise(hr, recipe.poisson_scale, shot);
  x = jpeg_compress(x, recipe.jpeg_quality);
  x = gaussian_blur(x, recipe.blur_sigma, recipe.blur_kernel);
  x = gaussian_noise(x, recipe.gauss_sigma, read);
  DegradedPair pair;
  pair.hr = hr;
  pair.lr = resize_lanczos(x, {hr.width() / recipe.scale, hr.height() / recipe.scale});
  pair.scale = recipe.scale;
  return pair;
}

DegradedPair degrade_pair(const ImageGrid& hr, const DegradationRecipe& recipe) {
  Rng rng(recipe.seed);
  return degrade_pair(hr, recipe, rng);
}

PairPool::PairPool(std::vector<WeightedRecipe> recipes, std::size_t capacity)
    : recipes_(std::move(recipes)), capacity_(capacity) {
  if (recipes_.empty()) throw ArgumentError("PairPool: no recipes");
  double total = 0.0;
  for (const auto& r : recipes_) {
    if (!(r.weight > 0.0) || !std::isfinite(r.weight)) {
      throw ArgumentError("PairPool: weights must be positive");
    }
    r.recipe.validate();
    total += r.weight;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ArgumentError("PairPool: weights must sum to 1");
}

std::size_t PairPool::pick(Rng& rng) const {
  if (recipes_.empty()) throw ArgumentError("PairPool: empty pool");
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t i = 0; i < recipes_.size(); ++i) {
    acc += recipes_[i].weight;
    if (u < acc) return i;
  }
  return recipes_.size() - 1;
}

PairPool multiscale_pool(const DegradationRecipe& base, std::size_t capacity) {
  std::vector<WeightedRecipe> recipes;
  for (int s : {2, 3, 4}) {
    WeightedRecipe w{base, 1.0 / 3.0};
    w.recipe.scale = s;
    recipes.push_back(w);
  }
  recipes.back().weight = 1.0 - 2.0 / 3.0;
  return PairPool(std::move(recipes), capacity);
}

ImageGrid crop_to_multiple(const ImageGrid& hr, int scale) {
  if (scale < 1) throw ArgumentError("crop_to_multiple: scale must be >= 1");
  const int w = hr.width() - hr.width() % scale;
  const int h = hr.height() - hr.height() % scale;
  if (w == 0 || h == 0) throw ArgumentError("crop_to_multiple: image smaller than the scale");
  if (w == hr.width() && h == hr.height()) return hr;
  return crop(hr, 0, 0, w, h);
}

PoolDraw pool_draw(const PairPool& pool, const std::vector<ImageGrid>& hr_corpus, Rng& rng) {
  if (pool.empty()) throw ArgumentError("pool_draw: empty pool");
  if (hr_corpus.empty()) throw ArgumentError("pool_draw: empty corpus");
  PoolDraw d;
  d.recipe_index = pool.pick(rng);
  d.image_index = static_cast<std::size_t>(rng.below(hr_corpus.size()));
  Rng sub = rng.derive(rng());
  const DegradationRecipe& recipe = pool.recipes()[d.recipe_index].recipe;
  d.pair = degrade_pair(crop_to_multiple(hr_corpus[d.image_index], recipe.scale), recipe, sub);
  return d;
}

void write_pair(const DegradedPair& pair, const std::string& dir, const std::string& id) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path base(dir);
  save_png(pair.hr, (base / (id + "_hr.png")).string(), BitDepth::k16);
  save_png(pair.lr, (base / (id + "_x" + std::to_string(pair.scale) + ".png")).string(),
           BitDepth::k16);
}

}  // namespace radsynth

#include "radsynth/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <memory>
#include <numbers>

#include "radsynth/errors.hpp"

namespace radsynth {

ImageGrid::ImageGrid(int height, int width, int channels, double fill)
    : height_(height), width_(width), channels_(channels) {
  if (height < 0 || width < 0 || channels < 1) {
    throw ArgumentError("ImageGrid: invalid dimensions");
  }
  data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

ImageGrid::ImageGrid(int height, int width, int channels, std::vector<double> data)
    : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
  if (height < 0 || width < 0 || channels < 1 ||
      data_.size() != static_cast<std::size_t>(height) * width * channels) {
    throw ArgumentError("ImageGrid: data length does not match height*width*channels");
  }
}

ImageGrid& ImageGrid::clamp(double lo, double hi) noexcept {
  for (double& v : data_) v = std::clamp(v, lo, hi);
  return *this;
}

unsigned quantize(double v, unsigned max_value) noexcept {
  v = std::clamp(v, 0.0, 1.0);
  return static_cast<unsigned>(std::round(v * max_value));
}

namespace {

struct PngReadBuffer {
  std::span<const unsigned char> bytes;
  std::size_t offset = 0;
};

void png_error_fn(png_structp png, png_const_charp msg) {
  auto* err = static_cast<std::string*>(png_get_error_ptr(png));
  if (err) *err = msg;
  png_longjmp(png, 1);
}

void png_warning_fn(png_structp, png_const_charp) {}

void png_read_fn(png_structp png, png_bytep out, png_size_t len) {
  auto* buf = static_cast<PngReadBuffer*>(png_get_io_ptr(png));
  if (buf->offset + len > buf->bytes.size()) {
    png_error(png, "unexpected end of PNG data");
  }
  std::memcpy(out, buf->bytes.data() + buf->offset, len);
  buf->offset += len;
}

void png_write_fn(png_structp png, png_bytep data, png_size_t len) {
  auto* out = static_cast<std::vector<unsigned char>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + len);
}

void png_flush_fn(png_structp) {}

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path);
  return bytes;
}

}  // namespace

ImageGrid decode_png(std::span<const unsigned char> bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
    throw DecodeError("not a PNG stream");
  }
  std::string err;
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warning_fn);
  if (!png) throw DecodeError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw DecodeError("png_create_info_struct failed");
  }

  PngReadBuffer buf{bytes, 0};
  std::vector<unsigned char> raw;
  std::vector<png_bytep> rows;
  png_uint_32 width = 0, height = 0;
  int bit_depth = 0, color_type = 0;
  int channels = 0;
  std::size_t rowbytes = 0;

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DecodeError("malformed PNG: " + err);
  }
  png_set_read_fn(png, &buf, png_read_fn);
  png_read_info(png, info);
  png_get_IHDR(png, info, &width, &height, &bit_depth, &color_type, nullptr, nullptr,
               nullptr);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  if (bit_depth == 16) png_set_swap(png);  // little-endian host order
  png_read_update_info(png, info);
  bit_depth = png_get_bit_depth(png, info);
  channels = png_get_channels(png, info);
  rowbytes = png_get_rowbytes(png, info);

  raw.resize(rowbytes * height);
  rows.resize(height);
  for (png_uint_32 y = 0; y < height; ++y) rows[y] = raw.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  if (channels != 1 && channels != 3) {
    throw DecodeError("unsupported PNG channel layout");
  }
  ImageGrid grid(static_cast<int>(height), static_cast<int>(width), channels);
  auto values = grid.values();
  const std::size_t n = values.size();
  if (bit_depth == 16) {
    for (std::size_t i = 0; i < n; ++i) {
      std::uint16_t s;
      std::memcpy(&s, raw.data() + 2 * i, 2);
      values[i] = s / 65535.0;
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) values[i] = raw[i] / 255.0;
  }
  return grid;
}

ImageGrid load_png(const std::string& path) {
  const auto bytes = read_file(path);
  return decode_png(bytes);
}

std::vector<unsigned char> encode_png(const ImageGrid& grid, BitDepth depth) {
  if (grid.empty()) throw ArgumentError("encode_png: empty grid");
  if (grid.channels() != 1 && grid.channels() != 3) {
    throw ArgumentError("encode_png: channels must be 1 or 3");
  }
  std::vector<unsigned char> out;
  std::string err;
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warning_fn);
  if (!png) throw IoError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("png_create_info_struct failed");
  }
  const int bits = static_cast<int>(depth);
  const unsigned maxv = bits == 16 ? 65535u : 255u;
  const std::size_t bytes_per_sample = bits == 16 ? 2 : 1;
  const std::size_t rowbytes =
      static_cast<std::size_t>(grid.width()) * grid.channels() * bytes_per_sample;
  std::vector<unsigned char> raw(rowbytes * grid.height());
  const auto values = grid.values();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const unsigned q = quantize(values[i], maxv);
    if (bits == 16) {
      raw[2 * i] = static_cast<unsigned char>(q >> 8);  // PNG is big-endian
      raw[2 * i + 1] = static_cast<unsigned char>(q & 0xff);
    } else {
      raw[i] = static_cast<unsigned char>(q);
    }
  }
  std::vector<png_bytep> rows(grid.height());
  for (int y = 0; y < grid.height(); ++y) rows[y] = raw.data() + y * rowbytes;

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("PNG encode failed: " + err);
  }
  png_set_write_fn(png, &out, png_write_fn, png_flush_fn);
  png_set_IHDR(png, info, grid.width(), grid.height(), bits,
               grid.channels() == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

void save_png(const ImageGrid& grid, const std::string& path, BitDepth depth) {
  const auto bytes = encode_png(grid, depth);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path);
}

namespace {

double sinc(double x) {
  if (x == 0.0) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

double lanczos(double x, int a) {
  if (x <= -a || x >= a) return 0.0;
  return sinc(x) * sinc(x / a);
}

struct Tap {
  int first = 0;
  std::vector<double> weights;
};

// One normalized kernel per output coordinate. Downscaling stretches the
// kernel by the scale factor so it also acts as the anti-aliasing filter.
std::vector<Tap> lanczos_taps(int in_size, int out_size, int lobes) {
  const double scale = static_cast<double>(in_size) / out_size;
  const double filter_scale = std::max(scale, 1.0);
  const double support = lobes * filter_scale;
  std::vector<Tap> taps(out_size);
  for (int o = 0; o < out_size; ++o) {
    const double center = (o + 0.5) * scale;
    const int first = static_cast<int>(std::floor(center - support));
    const int last = static_cast<int>(std::ceil(center + support));
    Tap tap;
    tap.first = first;
    double total = 0.0;
    for (int i = first; i <= last; ++i) {
      const double w = lanczos((i + 0.5 - center) / filter_scale, lobes);
      tap.weights.push_back(w);
      total += w;
    }
    for (double& w : tap.weights) w /= total;
    taps[o] = std::move(tap);
  }
  return taps;
}

}  // namespace

ImageGrid resize_lanczos(const ImageGrid& grid, Resolution target, int lobes) {
  if (target.width <= 0 || target.height <= 0) {
    throw ArgumentError("resize_lanczos: target must be positive");
  }
  if (lobes < 2) throw ArgumentError("resize_lanczos: lobes must be >= 2");
  if (grid.empty()) throw ArgumentError("resize_lanczos: empty grid");
  const int c = grid.channels();
  const int h = grid.height();
  const int w = grid.width();

  const auto htaps = lanczos_taps(w, target.width, lobes);
  ImageGrid tmp(h, target.width, c);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < target.width; ++x) {
      const Tap& tap = htaps[x];
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (std::size_t k = 0; k < tap.weights.size(); ++k) {
          const int sx = std::clamp(tap.first + static_cast<int>(k), 0, w - 1);
          acc += tap.weights[k] * grid.at(y, sx, ch);
        }
        tmp.at(y, x, ch) = acc;
      }
    }
  }

  const auto vtaps = lanczos_taps(h, target.height, lobes);
  ImageGrid out(target.height, target.width, c);
  for (int y = 0; y < target.height; ++y) {
    const Tap& tap = vtaps[y];
    for (int x = 0; x < target.width; ++x) {
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (std::size_t k = 0; k < tap.weights.size(); ++k) {
          const int sy = std::clamp(tap.first + static_cast<int>(k), 0, h - 1);
          acc += tap.weights[k] * tmp.at(sy, x, ch);
        }
        out.at(y, x, ch) = acc;
      }
    }
  }
  out.clamp();
  return out;
}

ImageGrid crop(const ImageGrid& grid, int x0, int y0, int w, int h) {
  if (x0 < 0 || y0 < 0 || w <= 0 || h <= 0 || x0 + w > grid.width() ||
      y0 + h > grid.height()) {
    throw ArgumentError("crop: rectangle outside the grid");
  }
  ImageGrid out(h, w, grid.channels());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < grid.channels(); ++c) out.at(y, x, c) = grid.at(y0 + y, x0 + x, c);
  return out;
}

ImageGrid to_grayscale(const ImageGrid& grid) {
  if (grid.channels() == 1) return grid;
  ImageGrid out(grid.height(), grid.width(), 1);
  const int c = grid.channels();
  for (int y = 0; y < grid.height(); ++y)
    for (int x = 0; x < grid.width(); ++x) {
      double acc = 0.0;
      for (int ch = 0; ch < c; ++ch) acc += grid.at(y, x, ch);
      out.at(y, x) = acc / c;
    }
  return out;
}

PixelStats pixel_stats(const ImageGrid& grid) {
  if (grid.empty()) throw ArgumentError("pixel_stats: empty grid");
  const auto v = grid.values();
  PixelStats s;
  s.min = v[0];
  s.max = v[0];
  double sum = 0.0;
  for (double x : v) {
    sum += x;
    s.min = std::min(s.min, x);
    s.max = std::max(s.max, x);
  }
  s.mean = sum / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - s.mean) * (x - s.mean);
  s.std = std::sqrt(ss / static_cast<double>(v.size()));
  return s;
}

std::vector<std::string> list_png_files(const std::string& dir) {
  if (!std::filesystem::is_directory(dir)) throw ArgumentError("not a directory: " + dir);
  std::vector<std::string> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    if (ext == ".png") out.push_back(e.path().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace radsynth

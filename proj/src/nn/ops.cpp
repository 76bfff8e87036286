#include "radsynth/nn/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "radsynth/errors.hpp"

namespace radsynth::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) throw ArgumentError(std::string(op) + ": shape mismatch");
}

void require_chw(const Tensor& t, const char* op) {
  if (t.rank() != 3) throw ArgumentError(std::string(op) + ": expected [C,H,W]");
}

template <typename F, typename D>
Var unary(const Var& x, F f, D dfdx) {
  Tensor out(x->value.shape());
  const auto in = x->value.values();
  auto o = out.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = f(in[i]);
  return make_node(std::move(out), {x}, [dfdx](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer();
    const auto xv = p.value.values();
    const auto yv = self.value.values();
    const auto gy = self.grad.values();
    for (std::size_t i = 0; i < gy.size(); ++i) g[i] += gy[i] * dfdx(xv[i], yv[i]);
  });
}

}  // namespace

Var add(const Var& a, const Var& b) {
  require_same(a->value, b->value, "add");
  Tensor out = a->value;
  out += b->value;
  return make_node(std::move(out), {a, b}, [](Node& self) {
    for (auto& p : self.parents)
      if (p->requires_grad) p->grad_buffer() += self.grad;
  });
}

Var sub(const Var& a, const Var& b) {
  require_same(a->value, b->value, "sub");
  Tensor out = a->value;
  {
    auto o = out.values();
    const auto bv = b->value.values();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bv[i];
  }
  return make_node(std::move(out), {a, b}, [](Node& self) {
    if (self.parents[0]->requires_grad) self.parents[0]->grad_buffer() += self.grad;
    if (self.parents[1]->requires_grad) {
      auto& g = self.parents[1]->grad_buffer();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] -= self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same(a->value, b->value, "mul");
  Tensor out = a->value;
  {
    auto o = out.values();
    const auto bv = b->value.values();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
  }
  return make_node(std::move(out), {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& g = pa.grad_buffer();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * pa.value[i];
    }
  });
}

Var scale(const Var& a, double s) {
  Tensor out = a->value;
  out *= s;
  return make_node(std::move(out), {a}, [s](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer();
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += s * self.grad[i];
  });
}

Var add_scalar(const Var& a, double s) {
  Tensor out = a->value;
  for (double& v : out.values()) v += s;
  return make_node(std::move(out), {a}, [](Node& self) {
    if (self.parents[0]->requires_grad) self.parents[0]->grad_buffer() += self.grad;
  });
}

Var add_channel_bias(const Var& x, const Var& b) {
  require_chw(x->value, "add_channel_bias");
  const int c = x->value.channels();
  if (static_cast<int>(b->value.numel()) != c) {
    throw ArgumentError("add_channel_bias: bias length != channels");
  }
  const std::size_t plane = static_cast<std::size_t>(x->value.height()) * x->value.width();
  Tensor out = x->value;
  for (int ch = 0; ch < c; ++ch) {
    double* o = out.data() + ch * plane;
    const double bv = b->value[ch];
    for (std::size_t i = 0; i < plane; ++i) o[i] += bv;
  }
  return make_node(std::move(out), {x, b}, [c, plane](Node& self) {
    if (self.parents[0]->requires_grad) self.parents[0]->grad_buffer() += self.grad;
    if (self.parents[1]->requires_grad) {
      auto& g = self.parents[1]->grad_buffer();
      for (int ch = 0; ch < c; ++ch) {
        const double* gy = self.grad.data() + ch * plane;
        double acc = 0.0;
        for (std::size_t i = 0; i < plane; ++i) acc += gy[i];
        g[ch] += acc;
      }
    }
  });
}

Var mul_channel(const Var& x, const Var& s) {
  require_chw(x->value, "mul_channel");
  const int c = x->value.channels();
  if (static_cast<int>(s->value.numel()) != c) {
    throw ArgumentError("mul_channel: scale length != channels");
  }
  const std::size_t plane = static_cast<std::size_t>(x->value.height()) * x->value.width();
  Tensor out = x->value;
  for (int ch = 0; ch < c; ++ch) {
    double* o = out.data() + ch * plane;
    const double sv = s->value[ch];
    for (std::size_t i = 0; i < plane; ++i) o[i] *= sv;
  }
  return make_node(std::move(out), {x, s}, [c, plane](Node& self) {
    Node& px = *self.parents[0];
    Node& ps = *self.parents[1];
    if (px.requires_grad) {
      auto& g = px.grad_buffer();
      for (int ch = 0; ch < c; ++ch) {
        const double sv = ps.value[ch];
        for (std::size_t i = 0; i < plane; ++i) g[ch * plane + i] += self.grad[ch * plane + i] * sv;
      }
    }
    if (ps.requires_grad) {
      auto& g = ps.grad_buffer();
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (std::size_t i = 0; i < plane; ++i)
          acc += self.grad[ch * plane + i] * px.value[ch * plane + i];
        g[ch] += acc;
      }
    }
  });
}

namespace {

// cols[(c*k + ky)*k + kx][y*W + x] = x[c][y+ky-p][x+kx-p], zero outside.
void im2col(const Tensor& x, int k, RowMat& cols) {
  const int c = x.channels(), h = x.height(), w = x.width(), p = k / 2;
  cols.setZero(static_cast<Eigen::Index>(c) * k * k, static_cast<Eigen::Index>(h) * w);
  for (int ch = 0; ch < c; ++ch)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        double* row = cols.data() + ((static_cast<std::size_t>(ch) * k + ky) * k + kx) * h * w;
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - p;
          if (sy < 0 || sy >= h) continue;
          const double* src = x.data() + (static_cast<std::size_t>(ch) * h + sy) * w;
          double* dst = row + static_cast<std::size_t>(y) * w;
          const int x_lo = std::max(0, p - kx);
          const int x_hi = std::min(w, w + p - kx);
          for (int xx = x_lo; xx < x_hi; ++xx) dst[xx] = src[xx + kx - p];
        }
      }
}

void col2im_add(const RowMat& cols, int k, Tensor& gx) {
  const int c = gx.channels(), h = gx.height(), w = gx.width(), p = k / 2;
  for (int ch = 0; ch < c; ++ch)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const double* row =
            cols.data() + ((static_cast<std::size_t>(ch) * k + ky) * k + kx) * h * w;
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - p;
          if (sy < 0 || sy >= h) continue;
          double* dst = gx.data() + (static_cast<std::size_t>(ch) * h + sy) * w;
          const double* src = row + static_cast<std::size_t>(y) * w;
          const int x_lo = std::max(0, p - kx);
          const int x_hi = std::min(w, w + p - kx);
          for (int xx = x_lo; xx < x_hi; ++xx) dst[xx + kx - p] += src[xx];
        }
      }
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& bias) {
  require_chw(x->value, "conv2d");
  const Tensor& wt = w->value;
  if (wt.rank() != 4 || wt.dim(1) != x->value.channels() || wt.dim(2) != wt.dim(3) ||
      wt.dim(2) % 2 == 0) {
    throw ArgumentError("conv2d: weight must be [O, C, k, k] with odd k matching input C");
  }
  const int o = wt.dim(0), c = wt.dim(1), k = wt.dim(2);
  const int h = x->value.height(), wd = x->value.width();
  const Eigen::Index hw = static_cast<Eigen::Index>(h) * wd;
  const Eigen::Index ckk = static_cast<Eigen::Index>(c) * k * k;
  if (bias && static_cast<int>(bias->value.numel()) != o) {
    throw ArgumentError("conv2d: bias length != output channels");
  }

  auto cols = std::make_shared<RowMat>();
  Tensor out = Tensor::chw(o, h, wd);
  CMapMat wm(wt.data(), o, ckk);
  MapMat om(out.data(), o, hw);
  if (k == 1) {
    om.noalias() = wm * CMapMat(x->value.data(), c, hw);
  } else {
    im2col(x->value, k, *cols);
    om.noalias() = wm * (*cols);
  }
  if (bias) {
    for (int oc = 0; oc < o; ++oc) om.row(oc).array() += bias->value[oc];
  }

  std::vector<Var> parents{x, w};
  if (bias) parents.push_back(bias);
  return make_node(std::move(out), std::move(parents), [cols, o, c, k, hw, ckk](Node& self) {
    Node& px = *self.parents[0];
    Node& pw = *self.parents[1];
    CMapMat gy(self.grad.data(), o, hw);
    if (pw.requires_grad) {
      MapMat gw(pw.grad_buffer().data(), o, ckk);
      if (k == 1) {
        gw.noalias() += gy * CMapMat(px.value.data(), c, hw).transpose();
      } else {
        gw.noalias() += gy * cols->transpose();
      }
    }
    if (px.requires_grad) {
      CMapMat wm(pw.value.data(), o, ckk);
      if (k == 1) {
        MapMat gx(px.grad_buffer().data(), c, hw);
        gx.noalias() += wm.transpose() * gy;
      } else {
        RowMat gcols = wm.transpose() * gy;
        col2im_add(gcols, k, px.grad_buffer());
      }
    }
    if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
      auto& gb = self.parents[2]->grad_buffer();
      for (int oc = 0; oc < o; ++oc) gb[oc] += gy.row(oc).sum();
    }
  });
}

Var relu(const Var& x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var leaky_relu(const Var& x, double slope) {
  return unary(
      x, [slope](double v) { return v > 0.0 ? v : slope * v; },
      [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
}

Var silu(const Var& x) {
  return unary(
      x, [](double v) { return v / (1.0 + std::exp(-v)); },
      [](double v, double) {
        const double s = 1.0 / (1.0 + std::exp(-v));
        return s * (1.0 + v * (1.0 - s));
      });
}

Var gelu(const Var& x) {
  return unary(
      x, [](double v) { return 0.5 * v * (1.0 + std::erf(v / std::numbers::sqrt2)); },
      [](double v, double) {
        const double cdf = 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2));
        const double pdf = std::exp(-0.5 * v * v) / std::sqrt(2.0 * std::numbers::pi);
        return cdf + v * pdf;
      });
}

Var sigmoid(const Var& x) {
  return unary(
      x,
      [](double v) {
        return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var avg_pool2(const Var& x) {
  require_chw(x->value, "avg_pool2");
  const int c = x->value.channels(), h = x->value.height(), w = x->value.width();
  if (h % 2 || w % 2) throw ArgumentError("avg_pool2: spatial dims must be even");
  Tensor out = Tensor::chw(c, h / 2, w / 2);
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < h / 2; ++y)
      for (int xx = 0; xx < w / 2; ++xx)
        out.at(ch, y, xx) = 0.25 * (x->value.at(ch, 2 * y, 2 * xx) + x->value.at(ch, 2 * y, 2 * xx + 1) +
                                    x->value.at(ch, 2 * y + 1, 2 * xx) +
                                    x->value.at(ch, 2 * y + 1, 2 * xx + 1));
  return make_node(std::move(out), {x}, [c, h, w](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer();
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx) g.at(ch, y, xx) += 0.25 * self.grad.at(ch, y / 2, xx / 2);
  });
}

Var upsample_nearest2(const Var& x) {
  require_chw(x->value, "upsample_nearest2");
  const int c = x->value.channels(), h = x->value.height(), w = x->value.width();
  Tensor out = Tensor::chw(c, 2 * h, 2 * w);
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < 2 * h; ++y)
      for (int xx = 0; xx < 2 * w; ++xx) out.at(ch, y, xx) = x->value.at(ch, y / 2, xx / 2);
  return make_node(std::move(out), {x}, [c, h, w](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer();
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < 2 * h; ++y)
        for (int xx = 0; xx < 2 * w; ++xx) g.at(ch, y / 2, xx / 2) += self.grad.at(ch, y, xx);
  });
}

Var concat_channels(const Var& a, const Var& b) {
  require_chw(a->value, "concat_channels");
  require_chw(b->value, "concat_channels");
  if (a->value.height() != b->value.height() || a->value.width() != b->value.width()) {
    throw ArgumentError("concat_channels: spatial mismatch");
  }
  const std::size_t na = a->value.numel();
  Tensor out = Tensor::chw(a->value.channels() + b->value.channels(), a->value.height(),
                           a->value.width());
  std::copy(a->value.storage().begin(), a->value.storage().end(), out.storage().begin());
  std::copy(b->value.storage().begin(), b->value.storage().end(), out.storage().begin() + na);
  return make_node(std::move(out), {a, b}, [na](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& g = pa.grad_buffer();
      for (std::size_t i = 0; i < na; ++i) g[i] += self.grad[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[na + i];
    }
  });
}

Var global_avg_pool(const Var& x) {
  require_chw(x->value, "global_avg_pool");
  const int c = x->value.channels();
  const std::size_t plane = static_cast<std::size_t>(x->value.height()) * x->value.width();
  Tensor out = Tensor::chw(c, 1, 1);
  for (int ch = 0; ch < c; ++ch) {
    double acc = 0.0;
    for (std::size_t i = 0; i < plane; ++i) acc += x->value[ch * plane + i];
    out[ch] = acc / static_cast<double>(plane);
  }
  return make_node(std::move(out), {x}, [c, plane](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer();
    for (int ch = 0; ch < c; ++ch) {
      const double gv = self.grad[ch] / static_cast<double>(plane);
      for (std::size_t i = 0; i < plane; ++i) g[ch * plane + i] += gv;
    }
  });
}

Var layer_norm_channels(const Var& x, const Var& gain, const Var& bias, double eps) {
  require_chw(x->value, "layer_norm_channels");
  const int c = x->value.channels();
  const std::size_t plane = static_cast<std::size_t>(x->value.height()) * x->value.width();
  if (static_cast<int>(gain->value.numel()) != c || static_cast<int>(bias->value.numel()) != c) {
    throw ArgumentError("layer_norm_channels: gain/bias length != channels");
  }
  auto xhat = std::make_shared<Tensor>(x->value.shape());
  auto inv_std = std::make_shared<std::vector<double>>(plane);
  Tensor out(x->value.shape());
  for (std::size_t p = 0; p < plane; ++p) {
    double m = 0.0;
    for (int ch = 0; ch < c; ++ch) m += x->value[ch * plane + p];
    m /= c;
    double v = 0.0;
    for (int ch = 0; ch < c; ++ch) {
      const double d = x->value[ch * plane + p] - m;
      v += d * d;
    }
    v /= c;
    const double is = 1.0 / std::sqrt(v + eps);
    (*inv_std)[p] = is;
    for (int ch = 0; ch < c; ++ch) {
      const double xh = (x->value[ch * plane + p] - m) * is;
      (*xhat)[ch * plane + p] = xh;
      out[ch * plane + p] = gain->value[ch] * xh + bias->value[ch];
    }
  }
  return make_node(std::move(out), {x, gain, bias}, [c, plane, xhat, inv_std](Node& self) {
    Node& px = *self.parents[0];
    Node& pg = *self.parents[1];
    Node& pb = *self.parents[2];
    if (pg.requires_grad) {
      auto& g = pg.grad_buffer();
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (std::size_t p = 0; p < plane; ++p) acc += self.grad[ch * plane + p] * (*xhat)[ch * plane + p];
        g[ch] += acc;
      }
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer();
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (std::size_t p = 0; p < plane; ++p) acc += self.grad[ch * plane + p];
        g[ch] += acc;
      }
    }
    if (px.requires_grad) {
      auto& g = px.grad_buffer();
      std::vector<double> gxh(c);
      for (std::size_t p = 0; p < plane; ++p) {
        double m1 = 0.0, m2 = 0.0;
        for (int ch = 0; ch < c; ++ch) {
          gxh[ch] = self.grad[ch * plane + p] * pg.value[ch];
          m1 += gxh[ch];
          m2 += gxh[ch] * (*xhat)[ch * plane + p];
        }
        m1 /= c;
        m2 /= c;
        for (int ch = 0; ch < c; ++ch) {
          g[ch * plane + p] += (*inv_std)[p] * (gxh[ch] - m1 - (*xhat)[ch * plane + p] * m2);
        }
      }
    }
  });
}

Var embedding_row(const Var& table, int index) {
  const Tensor& t = table->value;
  if (t.rank() != 2) throw ArgumentError("embedding_row: table must be [N, D]");
  if (index < 0 || index >= t.dim(0)) throw ArgumentError("embedding_row: index out of range");
  const int d = t.dim(1);
  Tensor out = Tensor::chw(d, 1, 1);
  for (int i = 0; i < d; ++i) out[i] = t[static_cast<std::size_t>(index) * d + i];
  return make_node(std::move(out), {table}, [index, d](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer();
    for (int i = 0; i < d; ++i) g[static_cast<std::size_t>(index) * d + i] += self.grad[i];
  });
}

Tensor pixel_shuffle(const Tensor& x, int s) {
  if (x.rank() != 3) throw ArgumentError("pixel_shuffle: expected [C,H,W]");
  if (s < 1 || x.channels() % (s * s) != 0) {
    throw ArgumentError("pixel_shuffle: channels not divisible by scale^2");
  }
  const int c = x.channels() / (s * s), h = x.height(), w = x.width();
  Tensor out = Tensor::chw(c, h * s, w * s);
  for (int ch = 0; ch < c; ++ch)
    for (int i = 0; i < s; ++i)
      for (int j = 0; j < s; ++j)
        for (int y = 0; y < h; ++y)
          for (int xx = 0; xx < w; ++xx)
            out.at(ch, y * s + i, xx * s + j) = x.at(ch * s * s + i * s + j, y, xx);
  return out;
}

Tensor pixel_unshuffle(const Tensor& x, int s) {
  if (x.rank() != 3) throw ArgumentError("pixel_unshuffle: expected [C,H,W]");
  if (s < 1 || x.height() % s || x.width() % s) {
    throw ArgumentError("pixel_unshuffle: spatial dims not divisible by scale");
  }
  const int c = x.channels(), h = x.height() / s, w = x.width() / s;
  Tensor out = Tensor::chw(c * s * s, h, w);
  for (int ch = 0; ch < c; ++ch)
    for (int i = 0; i < s; ++i)
      for (int j = 0; j < s; ++j)
        for (int y = 0; y < h; ++y)
          for (int xx = 0; xx < w; ++xx)
            out.at(ch * s * s + i * s + j, y, xx) = x.at(ch, y * s + i, xx * s + j);
  return out;
}

Var pixel_shuffle(const Var& x, int s) {
  Tensor out = pixel_shuffle(x->value, s);
  return make_node(std::move(out), {x}, [s](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.grad_buffer() += pixel_unshuffle(self.grad, s);
  });
}

Var reshape(const Var& x, std::vector<int> shape) {
  Tensor out = x->value.reshaped(std::move(shape));
  return make_node(std::move(out), {x}, [](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer();
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
  });
}

Var clamp_st(const Var& x, double lo, double hi) {
  Tensor out = x->value;
  for (double& v : out.values()) v = std::clamp(v, lo, hi);
  return make_node(std::move(out), {x}, [](Node& self) {
    if (self.parents[0]->requires_grad) self.parents[0]->grad_buffer() += self.grad;
  });
}

Var sum(const Var& x) {
  double acc = 0.0;
  for (double v : x->value.values()) acc += v;
  return make_node(Tensor::scalar(acc), {x}, [](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer();
    const double gv = self.grad[0];
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += gv;
  });
}

Var mean(const Var& x) {
  const double n = static_cast<double>(x->value.numel());
  return scale(sum(x), 1.0 / n);
}

Var l1_loss(const Var& a, const Var& target, double delta) {
  require_same(a->value, target->value, "l1_loss");
  const std::size_t n = a->value.numel();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = a->value[i] - target->value[i];
    acc += delta > 0.0 ? std::sqrt(r * r + delta * delta) - delta : std::abs(r);
  }
  return make_node(Tensor::scalar(acc / n), {a, target}, [n, delta](Node& self) {
    Node& pa = *self.parents[0];
    Node& pt = *self.parents[1];
    const double gv = self.grad[0] / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double r = pa.value[i] - pt.value[i];
      double d;
      if (delta > 0.0) {
        d = r / std::sqrt(r * r + delta * delta);
      } else {
        d = r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0);
      }
      if (pa.requires_grad) pa.grad_buffer()[i] += gv * d;
      if (pt.requires_grad) pt.grad_buffer()[i] -= gv * d;
    }
  });
}

Var mse_loss(const Var& a, const Var& target) {
  require_same(a->value, target->value, "mse_loss");
  const std::size_t n = a->value.numel();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = a->value[i] - target->value[i];
    acc += r * r;
  }
  return make_node(Tensor::scalar(acc / n), {a, target}, [n](Node& self) {
    Node& pa = *self.parents[0];
    Node& pt = *self.parents[1];
    const double gv = 2.0 * self.grad[0] / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double r = pa.value[i] - pt.value[i];
      if (pa.requires_grad) pa.grad_buffer()[i] += gv * r;
      if (pt.requires_grad) pt.grad_buffer()[i] -= gv * r;
    }
  });
}

Var mean_softplus(const Var& x) {
  const std::size_t n = x->value.numel();
  double acc = 0.0;
  for (double v : x->value.values()) acc += std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v)));
  return make_node(Tensor::scalar(acc / n), {x}, [n](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer();
    const double gv = self.grad[0] / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double v = p.value[i];
      const double s = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
      g[i] += gv * s;
    }
  });
}

}  // namespace radsynth::nn

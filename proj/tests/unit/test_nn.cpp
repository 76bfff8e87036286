#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <functional>

#include "helpers.hpp"
#include "radsynth/errors.hpp"
#include "radsynth/nn/attention.hpp"
#include "radsynth/nn/autograd.hpp"
#include "radsynth/nn/checkpoint.hpp"
#include "radsynth/nn/gradcheck.hpp"
#include "radsynth/nn/ops.hpp"
#include "radsynth/nn/optim.hpp"
#include "radsynth/nn/spectral.hpp"

using namespace radsynth;
using namespace radsynth::nn;
using testing::random_tensor;

namespace {

double check(const std::function<Var()>& loss, const ParamList& params, int samples = 60,
             double eps = 1e-5) {
  Rng rng(99);
  return finite_difference_check(loss, params, samples, eps, rng).max_relative_error;
}

// Weighted sum so every output element receives a distinct upstream gradient.
Var probe_loss(const Var& y, std::uint64_t seed = 5) {
  const Var w = constant(random_tensor(y->value.shape(), seed));
  return sum(mul(y, w));
}

Tensor naive_conv(const Tensor& x, const Tensor& w, const Tensor* b) {
  const int O = w.dim(0), C = w.dim(1), k = w.dim(2), r = k / 2;
  Tensor out = Tensor::chw(O, x.height(), x.width());
  for (int o = 0; o < O; ++o)
    for (int y = 0; y < x.height(); ++y)
      for (int xx = 0; xx < x.width(); ++xx) {
        double s = b ? (*b)[o] : 0.0;
        for (int c = 0; c < C; ++c)
          for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j) {
              const int sy = y + i - r, sx = xx + j - r;
              if (sy < 0 || sx < 0 || sy >= x.height() || sx >= x.width()) continue;
              s += w[((static_cast<std::size_t>(o) * C + c) * k + i) * k + j] * x.at(c, sy, sx);
            }
        out.at(o, y, xx) = s;
      }
  return out;
}

}  // namespace

TEST_CASE("conv2d matches direct summation") {
  const Tensor x = random_tensor({3, 5, 7}, 1);
  const Tensor w = random_tensor({4, 3, 3, 3}, 2);
  const Tensor b = random_tensor({4}, 3);
  NoGradGuard g;
  const Tensor y = conv2d(constant(x), constant(w), constant(b))->value;
  CHECK(testing::max_abs_diff(y, naive_conv(x, w, &b)) < 1e-12);
  const Tensor w1 = random_tensor({2, 3, 1, 1}, 4);
  CHECK(testing::max_abs_diff(conv2d(constant(x), constant(w1), nullptr)->value,
                              naive_conv(x, w1, nullptr)) < 1e-12);
  CHECK_THROWS_AS((void)conv2d(constant(x), constant(random_tensor({2, 3, 2, 2}, 5)), nullptr),
                  ArgumentError);
}

TEST_CASE("elementwise and activation gradients") {
  auto a = parameter(random_tensor({2, 3, 4}, 10));
  auto b = parameter(random_tensor({2, 3, 4}, 11));
  ParamList ps{{"a", a}, {"b", b}};
  CHECK(check([&] { return probe_loss(add(a, b)); }, ps) < 1e-6);
  CHECK(check([&] { return probe_loss(sub(a, b)); }, ps) < 1e-6);
  CHECK(check([&] { return probe_loss(mul(a, b)); }, ps) < 1e-6);
  CHECK(check([&] { return probe_loss(scale(add_scalar(a, 0.3), -2.0)); }, ps) < 1e-6);
  CHECK(check([&] { return probe_loss(silu(a)); }, ps) < 1e-6);
  CHECK(check([&] { return probe_loss(gelu(a)); }, ps) < 1e-6);
  CHECK(check([&] { return probe_loss(sigmoid(a)); }, ps) < 1e-6);
  CHECK(check([&] { return probe_loss(leaky_relu(a)); }, ps) < 1e-6);
  CHECK(check([&] { return probe_loss(relu(a)); }, ps) < 1e-6);
}

TEST_CASE("broadcast, layout and normalisation gradients") {
  auto x = parameter(random_tensor({3, 4, 6}, 20));
  auto c = parameter(random_tensor({3}, 21));
  auto g = parameter(random_tensor({3}, 22));
  auto t = parameter(random_tensor({5, 3}, 23));
  ParamList ps{{"x", x}, {"c", c}, {"g", g}, {"t", t}};
  CHECK(check([&] { return probe_loss(add_channel_bias(x, c)); }, ps) < 1e-6);
  CHECK(check([&] { return probe_loss(mul_channel(x, c)); }, ps) < 1e-6);
  CHECK(check([&] { return probe_loss(avg_pool2(x)); }, ps) < 1e-6);
  CHECK(check([&] { return probe_loss(upsample_nearest2(x)); }, ps) < 1e-6);
  CHECK(check([&] { return probe_loss(concat_channels(x, x)); }, ps) < 1e-6);
  CHECK(check([&] { return probe_loss(global_avg_pool(x)); }, ps) < 1e-6);
  CHECK(check([&] { return probe_loss(layer_norm_channels(x, g, c)); }, ps) < 1e-5);
  CHECK(check([&] { return probe_loss(embedding_row(t, 2)); }, ps) < 1e-6);
  auto x4 = parameter(random_tensor({8, 2, 3}, 24));
  ParamList p4{{"x", x4}};
  CHECK(check([&] { return probe_loss(pixel_shuffle(x4, 2)); }, p4) < 1e-6);
  CHECK(check([&] { return probe_loss(reshape(x4, {2, 4, 6})); }, p4) < 1e-6);
}

TEST_CASE("conv2d gradient") {
  auto x = parameter(random_tensor({2, 5, 4}, 30));
  auto w = parameter(random_tensor({3, 2, 3, 3}, 31));
  auto b = parameter(random_tensor({3}, 32));
  auto w1 = parameter(random_tensor({3, 2, 1, 1}, 33));
  ParamList ps{{"x", x}, {"w", w}, {"b", b}, {"w1", w1}};
  CHECK(check([&] { return probe_loss(conv2d(x, w, b)); }, ps, 120) < 1e-6);
  CHECK(check([&] { return probe_loss(conv2d(x, w1, b)); }, ps, 120) < 1e-6);
}

TEST_CASE("loss gradients") {
  auto a = parameter(random_tensor({1, 4, 4}, 40));
  const Var target = constant(random_tensor({1, 4, 4}, 41));
  ParamList ps{{"a", a}};
  CHECK(check([&] { return l1_loss(a, target, 1e-3); }, ps) < 1e-5);
  CHECK(check([&] { return mse_loss(a, target); }, ps) < 1e-6);
  CHECK(check([&] { return mean_softplus(a); }, ps) < 1e-6);
  CHECK(check([&] { return mean(a); }, ps) < 1e-6);
}

TEST_CASE("l1 loss value and zero subgradient") {
  auto a = parameter(Tensor({4}, std::vector<double>{0.0, 1.0, -2.0, 0.5}));
  const Var target = constant(Tensor({4}, std::vector<double>{0.0, 0.0, 0.0, 0.0}));
  const Var l = l1_loss(a, target);
  CHECK(l->value[0] == doctest::Approx(3.5 / 4));
  backward(l);
  CHECK(a->grad[0] == 0.0);
  CHECK(a->grad[1] == doctest::Approx(0.25));
  CHECK(a->grad[2] == doctest::Approx(-0.25));
}

TEST_CASE("softplus is finite over the logit range") {
  NoGradGuard g;
  for (double z : {-80.0, -30.0, 0.0, 30.0, 80.0}) {
    const double v = mean_softplus(constant(Tensor::scalar(z)))->value[0];
    CHECK(std::isfinite(v));
    CHECK(v == doctest::Approx(std::log1p(std::exp(z))).epsilon(1e-12));
  }
}

TEST_CASE("pixel shuffle index map and inverse") {
  const Tensor x({4, 1, 1}, std::vector<double>{1, 2, 3, 4});
  const Tensor y = pixel_shuffle(x, 2);
  CHECK(y.shape() == std::vector<int>{1, 2, 2});
  CHECK(y.storage() == std::vector<double>{1, 2, 3, 4});
  const Tensor z = random_tensor({18, 3, 2}, 50);
  CHECK(pixel_unshuffle(pixel_shuffle(z, 3), 3) == z);
  CHECK(pixel_shuffle(z, 1) == z);
  CHECK_THROWS_AS((void)pixel_shuffle(random_tensor({6, 2, 2}, 51), 2), ArgumentError);
}

TEST_CASE("windowed attention matches a direct computation") {
  const int C = 4, H = 6, W = 5, heads = 2;
  const Tensor q = random_tensor({C, H, W}, 60), k = random_tensor({C, H, W}, 61),
               v = random_tensor({C, H, W}, 62);
  // Global window: every query attends to every position.
  const WindowSpec whole{H, W, 0};
  std::vector<Tensor> probs;
  const Tensor out = windowed_attention(q, k, v, heads, whole, &probs);
  const int d = C / heads;
  Tensor expect = Tensor::chw(C, H, W);
  for (int h = 0; h < heads; ++h) {
    for (int i = 0; i < H * W; ++i) {
      std::vector<double> s(H * W);
      double mx = -1e300;
      for (int j = 0; j < H * W; ++j) {
        double dot = 0.0;
        for (int c = 0; c < d; ++c) dot += q.at(h * d + c, i / W, i % W) * k.at(h * d + c, j / W, j % W);
        s[j] = dot / std::sqrt(static_cast<double>(d));
        mx = std::max(mx, s[j]);
      }
      double z = 0.0;
      for (double& e : s) z += (e = std::exp(e - mx));
      for (int c = 0; c < d; ++c) {
        double acc = 0.0;
        for (int j = 0; j < H * W; ++j) acc += s[j] / z * v.at(h * d + c, j / W, j % W);
        expect.at(h * d + c, i / W, i % W) = acc;
      }
    }
  }
  CHECK(testing::max_abs_diff(out, expect) < 1e-12);
  for (const Tensor& p : probs) {
    for (int r = 0; r < p.dim(0); ++r) {
      double s = 0.0;
      for (int c = 0; c < p.dim(1); ++c) s += p[static_cast<std::size_t>(r) * p.dim(1) + c];
      CHECK(std::abs(s - 1.0) < 1e-6);
    }
  }
  CHECK_THROWS_AS((void)windowed_attention(q, k, v, 3, whole), ArgumentError);
}

TEST_CASE("windowed attention gradient with overlap and padding") {
  auto q = parameter(random_tensor({4, 6, 5}, 70, 0.7));
  auto k = parameter(random_tensor({4, 6, 5}, 71, 0.7));
  auto v = parameter(random_tensor({4, 6, 5}, 72));
  ParamList ps{{"q", q}, {"k", k}, {"v", v}};
  for (const WindowSpec spec : {WindowSpec{4, 4, 0}, WindowSpec{4, 4, 2}, WindowSpec{3, 2, 1}}) {
    CHECK(check([&] { return probe_loss(windowed_attention(q, k, v, 2, spec)); }, ps, 150) < 1e-5);
  }
}

TEST_CASE("spectral normalization against SVD") {
  Eigen::MatrixXd m(2, 2);
  m << 3, 0, 0, 1;
  SpectralState st;
  const Eigen::MatrixXd n = spectral_normalize(m, 50, st);
  CHECK(std::abs(n(0, 0) - 1.0) < 1e-9);
  CHECK(std::abs(n(1, 1) - 1.0 / 3.0) < 1e-9);

  Rng rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::MatrixXd a(40, 30);
    for (int i = 0; i < a.size(); ++i) a.data()[i] = rng.normal();
    SpectralState s;
    const Eigen::MatrixXd an = spectral_normalize(a, 500, s, trial);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(an);
    CHECK(std::abs(svd.singularValues()(0) - 1.0) < 1e-3);
  }
  SpectralState z;
  const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(3, 3);
  CHECK(spectral_normalize(zero, 3, z) == zero);
  CHECK(z.sigma == 1.0);
}

TEST_CASE("spectral normalized weight gradient") {
  auto w = parameter(random_tensor({3, 2, 3, 3}, 80));
  const Var x = constant(random_tensor({2, 4, 4}, 81));
  SpectralState st;
  (void)spectral_normalized(w, st, 30, true);
  ParamList ps{{"w", w}};
  // With u, v frozen the finite difference sees exactly the function whose gradient is taped.
  CHECK(check([&] { return probe_loss(conv2d(x, spectral_normalized(w, st, 1, false), nullptr)); },
              ps, 54) < 1e-3);
}

TEST_CASE("gradient clipping and AdamW") {
  auto a = parameter(Tensor({2}, std::vector<double>{1.0, -1.0}));
  ParamList ps{{"a", a}};
  a->grad_buffer() = Tensor({2}, std::vector<double>{3.0, 4.0});
  CHECK(global_grad_norm(ps) == doctest::Approx(5.0));
  CHECK(clip_grad_norm(ps, 1.0) == doctest::Approx(5.0));
  CHECK(global_grad_norm(ps) <= 1.0 + 1e-9);

  AdamWConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.01;
  AdamW opt(ps, cfg);
  const double g0 = a->grad[0], w0 = a->value[0];
  opt.step();
  // First step: m_hat = g, v_hat = g^2 -> update = lr * g / (|g| + eps) plus decoupled decay.
  const double expect = w0 - cfg.lr * cfg.weight_decay * w0 - cfg.lr * g0 / (std::abs(g0) + cfg.eps);
  CHECK(a->value[0] == doctest::Approx(expect).epsilon(1e-12));
  CHECK(opt.step_count() == 1);

  zero_grad(ps);
  a->grad_buffer() = Tensor({2}, std::vector<double>{1.0, 1.0});
  clip_grad_norm(ps, 0.0);
  const Tensor before = a->value;
  opt.step();
  CHECK(a->value == before);
}

TEST_CASE("EMA shadow extremes") {
  auto a = parameter(Tensor({3}, 1.0));
  ParamList ps{{"a", a}};
  EmaShadow ema(ps);
  a->value = Tensor({3}, 5.0);
  ema.update(ps, 1.0);
  CHECK(ema.weights()[0] == Tensor({3}, 1.0));
  ema.update(ps, 0.0);
  CHECK(ema.weights()[0] == Tensor({3}, 5.0));
  a->value = Tensor({3}, 7.0);
  ema.update(ps, 0.95);
  CHECK(ema.weights()[0][0] == doctest::Approx(0.95 * 5.0 + 0.05 * 7.0));
  auto b = parameter(Tensor({2}, 0.0));
  CHECK_THROWS_AS(ema.update(ParamList{{"b", b}}, 0.5), ArgumentError);
}

TEST_CASE("checkpoint round trip and corruption") {
  const auto dir = testing::scratch_dir("ckpt");
  Checkpoint c;
  c.kind = "unit";
  c.meta["k"] = "v";
  c.tensors.emplace_back("t", random_tensor({2, 3}, 90));
  const std::string path = (dir / "c.bin").string();
  save_checkpoint(c, path);
  const Checkpoint r = load_checkpoint(path);
  CHECK(r.kind == "unit");
  CHECK(r.meta.at("k") == "v");
  REQUIRE(r.find("t"));
  CHECK(*r.find("t") == c.tensors[0].second);
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << "garbage";
  }
  CHECK_THROWS_AS((void)load_checkpoint(path), DecodeError);
}

#include <doctest.h>

#include <cmath>
#include <numeric>

#include "helpers.hpp"
#include "radsynth/errors.hpp"
#include "radsynth/nn/gradcheck.hpp"
#include "radsynth/nn/ops.hpp"
#include "radsynth/sr_model.hpp"

using namespace radsynth;
using nn::Tensor;
using nn::Var;

namespace {

SRGeneratorConfig tiny_config(int scale = 2) {
  SRGeneratorConfig c;
  c.embed_dim = 8;
  c.window = 2;
  c.heads = 2;
  c.n_groups = 1;
  c.blocks_per_group = 1;
  c.mlp_ratio = 2;
  c.scale = scale;
  c.seed = 3;
  return c;
}

void zero_params(const nn::ParamList& params) {
  for (const auto& p : params) p.var->value.fill(0.0);
}

// Fixed random linear readout so the loss depends on every output pixel.
Var readout(const Var& out, std::uint64_t seed) {
  const Tensor w = testing::random_tensor(out->value.shape(), seed);
  return nn::sum(nn::mul(out, nn::constant(w)));
}

double l2(const Tensor& t) {
  double s = 0;
  for (double v : t.values()) s += v * v;
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("window partition tiling") {
  const Tensor f = testing::random_tensor({3, 16, 8}, 1);
  const WindowPartition p = window_partition(f, 4);
  CHECK(p.windows.size() == 8);
  CHECK(p.rows == 4);
  CHECK(p.cols == 2);
  for (const auto& w : p.windows) CHECK(w.shape() == std::vector<int>{3, 4, 4});
  CHECK(p.windows[1].at(2, 3, 1) == f.at(2, 3, 5));
  CHECK(window_merge(p) == f);

  const Tensor g = testing::random_tensor({2, 10, 6}, 2);
  const WindowPartition q = window_partition(g, 4);
  CHECK(q.windows.size() == 6);
  CHECK(q.rows == 3);
  CHECK(q.cols == 2);
  // Edge clamp fills the padding.
  CHECK(q.windows[5].at(1, 3, 3) == g.at(1, 9, 5));
  CHECK(window_merge(q) == g);
}

TEST_CASE("window partition round trip property") {
  Rng rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    const int c = 1 + static_cast<int>(rng.below(3));
    const int h = 1 + static_cast<int>(rng.below(17));
    const int w = 1 + static_cast<int>(rng.below(17));
    const int win = 1 + static_cast<int>(rng.below(6));
    const Tensor f = testing::random_tensor({c, h, w}, 100 + trial);
    CHECK(window_merge(window_partition(f, win)) == f);
  }
}

TEST_CASE("window attention cases") {
  // Single position: softmax of a scalar is 1, output equals the value.
  const Tensor one = testing::random_tensor({4, 1, 1}, 5);
  const auto out1 = window_attention({one}, 2);
  CHECK(testing::max_abs_diff(out1[0], one) < 1e-15);

  // Constant queries and keys give the mean of the values.
  const Tensor qk({4, 3, 3}, 0.7);
  const Tensor v = testing::random_tensor({4, 3, 3}, 6);
  std::vector<Tensor> probs;
  const auto out = window_attention({qk}, {qk}, {v}, 2, &probs);
  for (int c = 0; c < 4; ++c) {
    double m = 0;
    for (int i = 0; i < 9; ++i) m += v[c * 9 + i];
    m /= 9;
    for (int i = 0; i < 9; ++i) CHECK(out[0][c * 9 + i] == doctest::Approx(m).epsilon(1e-12));
  }
  CHECK(probs.size() == 2);

  // Shapes preserved, rows stochastic.
  for (int heads : {1, 2, 4}) {
    std::vector<Tensor> ws = {testing::random_tensor({8, 4, 4}, 7), testing::random_tensor({8, 4, 4}, 8)};
    std::vector<Tensor> pr;
    const auto o = window_attention(ws, ws, ws, heads, &pr);
    CHECK(o.size() == 2);
    for (const auto& t : o) CHECK(t.shape() == ws[0].shape());
    for (const auto& p : pr) {
      const int n = p.dim(0);
      for (int r = 0; r < n; ++r) {
        double s = 0;
        for (int j = 0; j < p.dim(1); ++j) s += p[r * p.dim(1) + j];
        CHECK(std::abs(s - 1.0) < 1e-6);
      }
    }
  }
  CHECK_THROWS_AS((void)window_attention({testing::random_tensor({6, 2, 2}, 9)}, 4), ArgumentError);
}

TEST_CASE("overlapping cross attention") {
  CHECK(overlap_pad(4, 0.5) == 2);
  CHECK(overlap_pad(4, 0.0) == 0);
  CHECK_THROWS_AS((void)overlap_pad(4, 1.0), ArgumentError);
  CHECK_THROWS_AS((void)overlap_pad(4, -0.1), ArgumentError);

  const Tensor q = testing::random_tensor({4, 8, 8}, 10);
  const Tensor k = testing::random_tensor({4, 8, 8}, 11);
  const Tensor v = testing::random_tensor({4, 8, 8}, 12);
  // Zero overlap is plain window attention.
  const Tensor plain = overlapping_cross_attention(q, k, v, 4, 0.0, 2);
  const auto wq = window_partition(q, 4), wk = window_partition(k, 4), wv = window_partition(v, 4);
  WindowPartition merged = wq;
  merged.windows = window_attention(wq.windows, wk.windows, wv.windows, 2);
  CHECK(testing::max_abs_diff(plain, window_merge(merged)) < 1e-12);

  // Receptive field: a key/value impulse at distance 2 outside the top-left window
  // reaches its output with overlap 0.5 but not with overlap 0.
  Tensor k2 = k, v2 = v;
  for (int c = 0; c < 4; ++c) {
    k2.at(c, 1, 5) += 3.0;
    v2.at(c, 1, 5) += 3.0;
  }
  auto window_delta = [&](double ratio) {
    const Tensor a = overlapping_cross_attention(q, k, v, 4, ratio, 2);
    const Tensor b = overlapping_cross_attention(q, k2, v2, 4, ratio, 2);
    double d = 0;
    for (int c = 0; c < 4; ++c)
      for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) d = std::max(d, std::abs(a.at(c, y, x) - b.at(c, y, x)));
    return d;
  };
  CHECK(window_delta(0.0) == 0.0);
  CHECK(window_delta(0.5) > 1e-3);
  // Distance 3 is outside the enlarged window as well.
  Tensor k3 = k, v3 = v;
  for (int c = 0; c < 4; ++c) {
    k3.at(c, 1, 7) += 3.0;
    v3.at(c, 1, 7) += 3.0;
  }
  const Tensor a = overlapping_cross_attention(q, k, v, 4, 0.5, 2);
  const Tensor b = overlapping_cross_attention(q, k3, v3, 4, 0.5, 2);
  double d = 0;
  for (int c = 0; c < 4; ++c)
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x) d = std::max(d, std::abs(a.at(c, y, x) - b.at(c, y, x)));
  CHECK(d == 0.0);

  for (double ratio : {0.0, 0.25, 0.5, 0.75}) {
    const Tensor odd = testing::random_tensor({2, 7, 5}, 13);
    CHECK(overlapping_cross_attention(odd, odd, odd, 3, ratio, 1).shape() == odd.shape());
  }
}

TEST_CASE("pixel shuffle upsample") {
  const Tensor f = testing::random_tensor({3, 4, 5}, 14);
  CHECK(pixel_shuffle_upsample(f, 1) == f);
  const Tensor four({4, 1, 1}, std::vector<double>{1, 2, 3, 4});
  const Tensor s = pixel_shuffle_upsample(four, 2);
  CHECK(s.shape() == std::vector<int>{1, 2, 2});
  CHECK(s.storage() == std::vector<double>{1, 2, 3, 4});
  const Tensor g = testing::random_tensor({18, 3, 2}, 15);
  CHECK(nn::pixel_unshuffle(pixel_shuffle_upsample(g, 3), 3) == g);
  CHECK_THROWS_AS((void)pixel_shuffle_upsample(testing::random_tensor({6, 2, 2}, 16), 2), ArgumentError);
}

TEST_CASE("residual group identity and ablation") {
  SRGeneratorConfig c = tiny_config();
  c.n_groups = 2;
  c.blocks_per_group = 2;
  const SRGenerator gen(c);
  const Var x = nn::constant(testing::random_tensor({8, 6, 6}, 17));
  const Tensor with = gen.group_forward(0, x)->value;
  const Tensor without = gen.group_forward(0, x, false)->value;
  CHECK(testing::max_abs_diff(with, without) > 1e-3);

  zero_params(gen.params_with_prefix("group1."));
  CHECK(gen.group_forward(1, x)->value == x->value);
  CHECK_THROWS_AS((void)gen.group_forward(2, x), ArgumentError);
}

TEST_CASE("generator shapes") {
  SRGeneratorConfig small = tiny_config(2);
  small.extra_scales = {3, 4};
  const SRGenerator gen(small);
  const ImageGrid probe = testing::random_image(32, 64, 18);
  const ImageGrid up2 = sr_forward(gen, probe);
  CHECK(up2.height() == 64);
  CHECK(up2.width() == 128);
  for (double v : up2.values()) CHECK((v >= 0.0 && v <= 1.0));
  const ImageGrid up3 = sr_forward(gen, testing::random_image(5, 7, 19), 3);
  CHECK(up3.height() == 15);
  CHECK(up3.width() == 21);
  CHECK_THROWS_AS((void)sr_forward(gen, probe, 5), ArgumentError);

  SRGeneratorConfig minimal = tiny_config(2);
  minimal.window = 4;
  const SRGenerator one(minimal);
  const ImageGrid out = sr_forward(one, testing::random_image(16, 32, 20));
  CHECK(out.height() == 32);
  CHECK(out.width() == 64);

  SRGeneratorConfig x4 = tiny_config(4);
  x4.embed_dim = 4;
  x4.window = 8;
  const SRGenerator big(x4);
  const ImageGrid target = sr_forward(big, ImageGrid(128, 256));
  CHECK(target.width() == 1024);
  CHECK(target.height() == 512);
  CHECK_THROWS_AS((void)sr_forward(big, ImageGrid(128, 257)), ArgumentError);

  SRGeneratorConfig bad = tiny_config();
  bad.heads = 3;
  CHECK_THROWS_AS(SRGenerator{bad}, ArgumentError);
  bad = tiny_config();
  bad.scale = 5;
  CHECK_THROWS_AS(SRGenerator{bad}, ArgumentError);
}

TEST_CASE("zero weights give a constant output") {
  const SRGenerator gen(tiny_config());
  zero_params(gen.params());
  const ImageGrid out = sr_forward(gen, testing::random_image(6, 6, 21));
  for (double v : out.values()) CHECK(v == 0.5);

  DiscriminatorConfig dc;
  dc.base_channels = 4;
  dc.depth = 2;
  Discriminator disc(dc);
  zero_params(disc.params());
  const ImageGrid r = disc.realness(testing::random_image(8, 8, 22));
  for (double v : r.values()) CHECK(v == 0.0);
}

TEST_CASE("generator gradient check") {
  SRGeneratorConfig c = tiny_config(2);
  c.overlap_ratio = 0.5;
  const SRGenerator gen(c);
  const Var x = nn::constant(nn::from_image(testing::random_image(4, 4, 23)));
  auto loss = [&] { return readout(gen.forward(x), 24); };
  Rng rng(25);
  for (const std::string prefix : {"", "first", "group0.block0.attn", "group0.block0.gate",
                                   "group0.overlap", "group0.conv", "up_x2"}) {
    const auto r = nn::finite_difference_check(loss, gen.params(), 40, 1e-5, rng, prefix);
    INFO(prefix << " worst " << r.worst_parameter);
    CHECK(r.max_relative_error < 1e-3);
  }
}

TEST_CASE("discriminator contract and gradient check") {
  DiscriminatorConfig dc;
  dc.base_channels = 4;
  dc.depth = 2;
  Discriminator disc(dc);
  CHECK(disc.realness(testing::random_image(8, 12, 26)).height() == 8);
  CHECK(disc.realness(testing::random_image(8, 12, 26)).width() == 12);
  CHECK_THROWS_AS((void)disc.realness(testing::random_image(8, 10, 26)), ArgumentError);
  CHECK(disc.spectral_states().size() == 1 + 2 * 2 + 2);

  (void)disc.realness(testing::random_image(8, 8, 27), true);
  const Var x = nn::constant(nn::from_image(testing::random_image(8, 8, 27)));
  auto loss = [&] { return readout(disc.forward(x, false), 28); };
  Rng rng(29);
  const auto r = nn::finite_difference_check(loss, disc.params(), 80, 1e-5, rng);
  INFO("worst " << r.worst_parameter);
  CHECK(r.max_relative_error < 1e-3);

  DiscriminatorConfig bad = dc;
  bad.depth = 1;
  CHECK_THROWS_AS(Discriminator{bad}, ArgumentError);
  bad = dc;
  bad.sn_power_iters = 0;
  CHECK_THROWS_AS(Discriminator{bad}, ArgumentError);
}

TEST_CASE("discriminator lipschitz probe") {
  DiscriminatorConfig dc;
  dc.base_channels = 4;
  dc.depth = 2;
  dc.sn_power_iters = 50;
  Discriminator disc(dc);
  const ImageGrid x = testing::random_image(16, 16, 30);
  for (int i = 0; i < 4; ++i) (void)disc.realness(x, true);
  for (const auto& s : disc.spectral_states()) CHECK(std::isfinite(s.sigma));

  // Operator-norm bound: a 3x3 conv with unit matrix norm is at most 3-Lipschitz,
  // leaky relu and 2x2 average pooling at most 1, nearest 2x upsampling exactly 2,
  // and skip sums add their bounds.
  const int depth = dc.depth;
  std::vector<double> enc{3.0};
  for (int i = 0; i < depth; ++i) enc.push_back(3.0 * enc.back());
  double h = enc.back();
  for (int i = 0; i < depth; ++i) h = 3.0 * 2.0 * h + enc[depth - 1 - i];
  const double bound = 3.0 * 3.0 * h;

  const Tensor base = nn::from_image(x);
  const Tensor d0 = disc.forward(nn::constant(base), false)->value;
  std::vector<double> ratios;
  for (double scale : {1e-2, 1e-3, 1e-4}) {
    Tensor dir = testing::random_tensor(base.shape(), 31);
    dir *= scale / l2(dir);
    Tensor moved = base;
    moved += dir;
    Tensor d1 = disc.forward(nn::constant(moved), false)->value;
    d1 += [&] { Tensor n = d0; n *= -1.0; return n; }();
    const double ratio = l2(d1) / scale;
    CHECK(std::isfinite(ratio));
    CHECK(ratio <= bound);
    ratios.push_back(ratio);
  }
  // Locally linear: the ratio settles as the perturbation shrinks.
  CHECK(std::abs(ratios[2] - ratios[1]) <= 0.05 * ratios[1]);
}

TEST_CASE("model checkpoints") {
  const auto dir = testing::scratch_dir("sr_ckpt");
  SRGeneratorConfig c = tiny_config(2);
  c.extra_scales = {3};
  const SRGenerator gen(c);
  save_generator((dir / "g.ckpt").string(), gen);
  const SRGenerator back = load_generator((dir / "g.ckpt").string());
  CHECK(back.config().extra_scales == std::vector<int>{3});
  const ImageGrid probe = testing::random_image(6, 6, 32);
  CHECK(sr_forward(back, probe, 3) == sr_forward(gen, probe, 3));

  DiscriminatorConfig dc;
  dc.base_channels = 4;
  dc.depth = 2;
  Discriminator disc(dc);
  (void)disc.realness(testing::random_image(8, 8, 33), true);
  save_discriminator((dir / "d.ckpt").string(), disc);
  Discriminator dback = load_discriminator((dir / "d.ckpt").string());
  CHECK(dback.spectral_states()[0].u == disc.spectral_states()[0].u);
  const ImageGrid q = testing::random_image(8, 8, 34);
  CHECK(dback.realness(q) == disc.realness(q));
  CHECK_THROWS_AS((void)load_generator((dir / "d.ckpt").string()), DecodeError);
}

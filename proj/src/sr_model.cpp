#include "radsynth/sr_model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "radsynth/errors.hpp"
#include "radsynth/nn/checkpoint.hpp"
#include "radsynth/nn/ops.hpp"
#include "radsynth/rng.hpp"

namespace radsynth {

namespace {

nn::Tensor conv_init(int out, int in, int k, Rng& rng, double gain = 1.0) {
  nn::Tensor t({out, in, k, k});
  const double std = gain * std::sqrt(1.0 / (in * k * k));
  for (double& v : t.values()) v = std * rng.normal();
  return t;
}

std::vector<int> upsample_factors(int scale) {
  switch (scale) {
    case 1: return {};
    case 2: return {2};
    case 3: return {3};
    case 4: return {2, 2};
    default: throw ArgumentError("unsupported scale " + std::to_string(scale));
  }
}

}  // namespace

WindowPartition window_partition(const nn::Tensor& features, int window) {
  if (features.rank() != 3) throw ArgumentError("window_partition: expected [C,H,W]");
  if (window < 1) throw ArgumentError("window_partition: window must be >= 1");
  WindowPartition p;
  p.window = window;
  p.height = features.height();
  p.width = features.width();
  p.rows = (p.height + window - 1) / window;
  p.cols = (p.width + window - 1) / window;
  const int c = features.channels();
  for (int r = 0; r < p.rows; ++r) {
    for (int q = 0; q < p.cols; ++q) {
      nn::Tensor w = nn::Tensor::chw(c, window, window);
      for (int ch = 0; ch < c; ++ch) {
        for (int y = 0; y < window; ++y) {
          const int sy = std::min(r * window + y, p.height - 1);
          for (int x = 0; x < window; ++x) {
            const int sx = std::min(q * window + x, p.width - 1);
            w.at(ch, y, x) = features.at(ch, sy, sx);
          }
        }
      }
      p.windows.push_back(std::move(w));
    }
  }
  return p;
}

nn::Tensor window_merge(const WindowPartition& p) {
  if (p.windows.size() != static_cast<std::size_t>(p.rows) * p.cols || p.windows.empty()) {
    throw ArgumentError("window_merge: inconsistent partition");
  }
  const int c = p.windows.front().channels();
  nn::Tensor out = nn::Tensor::chw(c, p.height, p.width);
  for (int r = 0; r < p.rows; ++r) {
    for (int q = 0; q < p.cols; ++q) {
      const nn::Tensor& w = p.windows[static_cast<std::size_t>(r) * p.cols + q];
      for (int ch = 0; ch < c; ++ch) {
        for (int y = 0; y < p.window && r * p.window + y < p.height; ++y) {
          for (int x = 0; x < p.window && q * p.window + x < p.width; ++x) {
            out.at(ch, r * p.window + y, q * p.window + x) = w.at(ch, y, x);
          }
        }
      }
    }
  }
  return out;
}

std::vector<nn::Tensor> window_attention(const std::vector<nn::Tensor>& q,
                                         const std::vector<nn::Tensor>& k,
                                         const std::vector<nn::Tensor>& v, int heads,
                                         std::vector<nn::Tensor>* probs) {
  if (q.size() != k.size() || q.size() != v.size()) {
    throw ArgumentError("window_attention: window count mismatch");
  }
  std::vector<nn::Tensor> out;
  out.reserve(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) {
    const nn::WindowSpec whole{q[i].height(), q[i].width(), 0};
    out.push_back(nn::windowed_attention(q[i], k[i], v[i], heads, whole, probs));
  }
  return out;
}

std::vector<nn::Tensor> window_attention(const std::vector<nn::Tensor>& windows, int heads) {
  return window_attention(windows, windows, windows, heads);
}

int overlap_pad(int window, double overlap_ratio) {
  if (!(overlap_ratio >= 0.0 && overlap_ratio < 1.0)) {
    throw ArgumentError("overlap_ratio must lie in [0,1)");
  }
  return static_cast<int>(std::lround(overlap_ratio * window));
}

nn::Tensor overlapping_cross_attention(const nn::Tensor& q, const nn::Tensor& k,
                                       const nn::Tensor& v, int window, double overlap_ratio,
                                       int heads, std::vector<nn::Tensor>* probs) {
  const nn::WindowSpec spec{window, window, overlap_pad(window, overlap_ratio)};
  return nn::windowed_attention(q, k, v, heads, spec, probs);
}

nn::Tensor pixel_shuffle_upsample(const nn::Tensor& features, int scale) {
  return nn::pixel_shuffle(features, scale);
}

void SRGeneratorConfig::validate() const {
  if (channels < 1 || embed_dim < 1 || window < 1 || n_groups < 0 || blocks_per_group < 0 ||
      heads < 1 || mlp_ratio < 1) {
    throw ArgumentError("SRGeneratorConfig: non-positive size");
  }
  if (embed_dim % heads) throw ArgumentError("SRGeneratorConfig: embed_dim not divisible by heads");
  overlap_pad(window, overlap_ratio);
  for (int s : scales()) upsample_factors(s);
  if (max_output_height < 1 || max_output_width < 1) {
    throw ArgumentError("SRGeneratorConfig: invalid output limit");
  }
}

std::vector<int> SRGeneratorConfig::scales() const {
  std::vector<int> s{scale};
  for (int e : extra_scales) {
    if (std::find(s.begin(), s.end(), e) == s.end()) s.push_back(e);
  }
  return s;
}

SRGenerator::SRGenerator(SRGeneratorConfig config) : config_(std::move(config)) {
  config_.validate();
  Rng rng(config_.seed);
  const int e = config_.embed_dim, c = config_.channels, hidden = e * config_.mlp_ratio;
  const int squeeze = std::max(1, e / 4), cab_mid = std::max(1, e / 2);
  first_w_ = param("first.w", conv_init(e, c, 3, rng));
  first_b_ = param("first.b", nn::Tensor({e}));
  auto attn_params = [&](const std::string& n, nn::Var& g, nn::Var& b, nn::Var& qw, nn::Var& kw,
                         nn::Var& vw, nn::Var& pw, nn::Var& pb) {
    g = param(n + ".ln1.g", nn::Tensor({e}, 1.0));
    b = param(n + ".ln1.b", nn::Tensor({e}));
    qw = param(n + ".attn.q_w", conv_init(e, e, 1, rng));
    kw = param(n + ".attn.k_w", conv_init(e, e, 1, rng));
    vw = param(n + ".attn.v_w", conv_init(e, e, 1, rng));
    pw = param(n + ".attn.proj_w", conv_init(e, e, 1, rng, 0.5));
    pb = param(n + ".attn.proj_b", nn::Tensor({e}));
  };
  auto mlp_params = [&](const std::string& n, nn::Var& g, nn::Var& b, nn::Var& w1, nn::Var& b1,
                        nn::Var& w2, nn::Var& b2) {
    g = param(n + ".ln2.g", nn::Tensor({e}, 1.0));
    b = param(n + ".ln2.b", nn::Tensor({e}));
    w1 = param(n + ".mlp.fc1_w", conv_init(hidden, e, 1, rng));
    b1 = param(n + ".mlp.fc1_b", nn::Tensor({hidden}));
    w2 = param(n + ".mlp.fc2_w", conv_init(e, hidden, 1, rng, 0.5));
    b2 = param(n + ".mlp.fc2_b", nn::Tensor({e}));
  };
  for (int gi = 0; gi < config_.n_groups; ++gi) {
    Group g;
    const std::string gn = "group" + std::to_string(gi);
    for (int bi = 0; bi < config_.blocks_per_group; ++bi) {
      HybridBlock b;
      const std::string n = gn + ".block" + std::to_string(bi);
      attn_params(n, b.ln1_g, b.ln1_b, b.q_w, b.k_w, b.v_w, b.proj_w, b.proj_b);
      b.cab1_w = param(n + ".gate.conv1_w", conv_init(cab_mid, e, 3, rng));
      b.cab1_b = param(n + ".gate.conv1_b", nn::Tensor({cab_mid}));
      b.cab2_w = param(n + ".gate.conv2_w", conv_init(e, cab_mid, 3, rng, 0.5));
      b.cab2_b = param(n + ".gate.conv2_b", nn::Tensor({e}));
      b.se1_w = param(n + ".gate.se1_w", conv_init(squeeze, e, 1, rng));
      b.se1_b = param(n + ".gate.se1_b", nn::Tensor({squeeze}));
      b.se2_w = param(n + ".gate.se2_w", conv_init(e, squeeze, 1, rng));
      b.se2_b = param(n + ".gate.se2_b", nn::Tensor({e}));
      mlp_params(n, b.ln2_g, b.ln2_b, b.fc1_w, b.fc1_b, b.fc2_w, b.fc2_b);
      g.blocks.push_back(std::move(b));
    }
    const std::string on = gn + ".overlap";
    auto& o = g.overlap;
    attn_params(on, o.ln1_g, o.ln1_b, o.q_w, o.k_w, o.v_w, o.proj_w, o.proj_b);
    mlp_params(on, o.ln2_g, o.ln2_b, o.fc1_w, o.fc1_b, o.fc2_w, o.fc2_b);
    g.conv_w = param(gn + ".conv_w", conv_init(e, e, 3, rng, 0.5));
    g.conv_b = param(gn + ".conv_b", nn::Tensor({e}));
    groups_.push_back(std::move(g));
  }
  body_w_ = param("body.w", conv_init(e, e, 3, rng));
  body_b_ = param("body.b", nn::Tensor({e}));
  pre_w_ = param("pre_up.w", conv_init(e, e, 3, rng));
  pre_b_ = param("pre_up.b", nn::Tensor({e}));
  for (int s : config_.scales()) {
    Upsampler up;
    up.factors = upsample_factors(s);
    const std::string n = "up_x" + std::to_string(s);
    for (std::size_t i = 0; i < up.factors.size(); ++i) {
      const int f = up.factors[i];
      up.stages.emplace_back(param(n + ".stage" + std::to_string(i) + "_w",
                                   conv_init(e * f * f, e, 3, rng)),
                             param(n + ".stage" + std::to_string(i) + "_b",
                                   nn::Tensor({e * f * f})));
    }
    up.last_w = param(n + ".last_w", conv_init(c, e, 3, rng, 0.5));
    up.last_b = param(n + ".last_b", nn::Tensor({c}));
    heads_.emplace(s, std::move(up));
  }
}

nn::Var SRGenerator::param(const std::string& name, nn::Tensor init) {
  auto v = nn::parameter(std::move(init));
  params_.push_back({name, v});
  return v;
}

nn::ParamList SRGenerator::params_with_prefix(const std::string& prefix) const {
  nn::ParamList out;
  for (const auto& p : params_) {
    if (p.name.rfind(prefix, 0) == 0) out.push_back(p);
  }
  return out;
}

nn::Var SRGenerator::run_mlp(const nn::Var& x, const nn::Var& g, const nn::Var& bias,
                             const nn::Var& w1, const nn::Var& b1, const nn::Var& w2,
                             const nn::Var& b2) const {
  const nn::Var a = nn::layer_norm_channels(x, g, bias);
  return nn::add(x, nn::conv2d(nn::gelu(nn::conv2d(a, w1, b1)), w2, b2));
}

nn::Var SRGenerator::run_hybrid(const HybridBlock& b, const nn::Var& x) const {
  const nn::Var a = nn::layer_norm_channels(x, b.ln1_g, b.ln1_b);
  const nn::WindowSpec spec{config_.window, config_.window, 0};
  const nn::Var att = nn::windowed_attention(nn::conv2d(a, b.q_w, nullptr),
                                             nn::conv2d(a, b.k_w, nullptr),
                                             nn::conv2d(a, b.v_w, nullptr), config_.heads, spec);
  const nn::Var attn_out = nn::conv2d(att, b.proj_w, b.proj_b);
  const nn::Var feat =
      nn::conv2d(nn::gelu(nn::conv2d(a, b.cab1_w, b.cab1_b)), b.cab2_w, b.cab2_b);
  const nn::Var squeeze = nn::silu(nn::conv2d(nn::global_avg_pool(feat), b.se1_w, b.se1_b));
  const nn::Var gate = nn::sigmoid(nn::conv2d(squeeze, b.se2_w, b.se2_b));
  const nn::Var gated = nn::mul_channel(feat, gate);
  const nn::Var h = nn::add(x, nn::add(attn_out, gated));
  return run_mlp(h, b.ln2_g, b.ln2_b, b.fc1_w, b.fc1_b, b.fc2_w, b.fc2_b);
}

nn::Var SRGenerator::run_overlap(const OverlapBlock& b, const nn::Var& x) const {
  const nn::Var a = nn::layer_norm_channels(x, b.ln1_g, b.ln1_b);
  const nn::WindowSpec spec{config_.window, config_.window,
                            overlap_pad(config_.window, config_.overlap_ratio)};
  const nn::Var att = nn::windowed_attention(nn::conv2d(a, b.q_w, nullptr),
                                             nn::conv2d(a, b.k_w, nullptr),
                                             nn::conv2d(a, b.v_w, nullptr), config_.heads, spec);
  const nn::Var h = nn::add(x, nn::conv2d(att, b.proj_w, b.proj_b));
  return run_mlp(h, b.ln2_g, b.ln2_b, b.fc1_w, b.fc1_b, b.fc2_w, b.fc2_b);
}

nn::Var SRGenerator::group_forward(int group, const nn::Var& x, bool residual) const {
  if (group < 0 || group >= static_cast<int>(groups_.size())) {
    throw ArgumentError("group_forward: no such group");
  }
  const Group& g = groups_[group];
  nn::Var h = x;
  for (const auto& b : g.blocks) h = run_hybrid(b, h);
  h = run_overlap(g.overlap, h);
  h = nn::conv2d(h, g.conv_w, g.conv_b);
  return residual ? nn::add(x, h) : h;
}

nn::Var SRGenerator::forward(const nn::Var& x, int scale) const {
  const nn::Tensor& xv = x->value;
  if (xv.rank() != 3 || xv.channels() != config_.channels) {
    throw ArgumentError("SRGenerator: input must be [C,H,W] with configured channels");
  }
  const int s = scale == 0 ? config_.scale : scale;
  const auto head = heads_.find(s);
  if (head == heads_.end()) throw ArgumentError("SRGenerator: no head for scale " + std::to_string(s));
  if (static_cast<long>(xv.height()) * s > config_.max_output_height ||
      static_cast<long>(xv.width()) * s > config_.max_output_width) {
    throw ArgumentError("SRGenerator: output would exceed the configured maximum size");
  }
  const nn::Var f0 = nn::conv2d(nn::add_scalar(x, -0.5), first_w_, first_b_);
  nn::Var h = f0;
  for (int g = 0; g < static_cast<int>(groups_.size()); ++g) h = group_forward(g, h);
  h = nn::add(nn::conv2d(h, body_w_, body_b_), f0);
  h = nn::leaky_relu(nn::conv2d(h, pre_w_, pre_b_), 0.01);
  const Upsampler& up = head->second;
  for (std::size_t i = 0; i < up.stages.size(); ++i) {
    h = nn::pixel_shuffle(nn::conv2d(h, up.stages[i].first, up.stages[i].second), up.factors[i]);
  }
  return nn::add_scalar(nn::conv2d(h, up.last_w, up.last_b), 0.5);
}

ImageGrid sr_forward(const SRGenerator& gen, const ImageGrid& lr, int scale) {
  nn::NoGradGuard guard;
  ImageGrid out = nn::to_image(gen.forward(nn::constant(nn::from_image(lr)), scale)->value);
  return out.clamp();
}

void DiscriminatorConfig::validate() const {
  if (depth < 2) throw ArgumentError("DiscriminatorConfig: depth must be >= 2");
  if (sn_power_iters < 1) throw ArgumentError("DiscriminatorConfig: need >= 1 power iteration");
  if (channels < 1 || base_channels < 1) throw ArgumentError("DiscriminatorConfig: bad channels");
}

Discriminator::Discriminator(DiscriminatorConfig config) : config_(config) {
  config_.validate();
  Rng rng(config_.seed);
  const int b = config_.base_channels;
  in_ = make_conv("in", b, config_.channels, 3, rng);
  for (int i = 1; i <= config_.depth; ++i) {
    down_.push_back(make_conv("down" + std::to_string(i), b << i, b << (i - 1), 3, rng));
  }
  for (int i = config_.depth - 1; i >= 0; --i) {
    up_.push_back(make_conv("up" + std::to_string(i), b << i, b << (i + 1), 3, rng));
  }
  head1_ = make_conv("head1", b, b, 3, rng);
  head2_ = make_conv("head2", 1, b, 3, rng);
}

Discriminator::Conv Discriminator::make_conv(const std::string& name, int out, int in, int k,
                                             Rng& rng) {
  Conv c;
  c.w = nn::parameter(conv_init(out, in, k, rng));
  c.b = nn::parameter(nn::Tensor({out}));
  params_.push_back({name + ".w", c.w});
  params_.push_back({name + ".b", c.b});
  c.state = states_.size();
  states_.emplace_back();
  return c;
}

nn::Var Discriminator::run_conv(const Conv& c, const nn::Var& x, bool update) {
  const nn::Var w = nn::spectral_normalized(c.w, states_[c.state], config_.sn_power_iters, update);
  return nn::conv2d(x, w, c.b);
}

nn::Var Discriminator::forward(const nn::Var& x, bool update_sn) {
  const nn::Tensor& xv = x->value;
  const int div = 1 << config_.depth;
  if (xv.rank() != 3 || xv.channels() != config_.channels) {
    throw ArgumentError("Discriminator: input must be [C,H,W] with configured channels");
  }
  if (xv.height() % div || xv.width() % div || xv.height() == 0) {
    throw ArgumentError("Discriminator: spatial dims must be divisible by 2^depth");
  }
  std::vector<nn::Var> skips;
  nn::Var h = nn::leaky_relu(run_conv(in_, x, update_sn));
  skips.push_back(h);
  for (const Conv& c : down_) {
    h = nn::leaky_relu(run_conv(c, nn::avg_pool2(h), update_sn));
    skips.push_back(h);
  }
  for (std::size_t i = 0; i < up_.size(); ++i) {
    h = nn::leaky_relu(run_conv(up_[i], nn::upsample_nearest2(h), update_sn));
    h = nn::add(h, skips[skips.size() - 2 - i]);
  }
  h = nn::leaky_relu(run_conv(head1_, h, update_sn));
  return run_conv(head2_, h, update_sn);
}

ImageGrid Discriminator::realness(const ImageGrid& image, bool update_sn) {
  nn::NoGradGuard guard;
  return nn::to_image(forward(nn::constant(nn::from_image(image)), update_sn)->value);
}

namespace {

std::string join_ints(const std::vector<int>& v) {
  std::ostringstream s;
  for (std::size_t i = 0; i < v.size(); ++i) s << (i ? "," : "") << v[i];
  return s.str();
}

std::vector<int> split_ints(const std::string& s) {
  std::vector<int> out;
  std::istringstream in(s);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    if (!tok.empty()) out.push_back(std::stoi(tok));
  }
  return out;
}

const std::string& meta(const nn::Checkpoint& c, const std::string& key) {
  const auto it = c.meta.find(key);
  if (it == c.meta.end()) throw DecodeError("checkpoint missing metadata '" + key + "'");
  return it->second;
}

}  // namespace

void save_generator(const std::string& path, const SRGenerator& gen) {
  const auto& c = gen.config();
  nn::Checkpoint ckpt;
  ckpt.kind = "sr-generator";
  std::ostringstream ratio;
  ratio.precision(17);
  ratio << c.overlap_ratio;
  ckpt.meta = {{"channels", std::to_string(c.channels)},
               {"embed_dim", std::to_string(c.embed_dim)},
               {"window", std::to_string(c.window)},
               {"overlap_ratio", ratio.str()},
               {"n_groups", std::to_string(c.n_groups)},
               {"blocks_per_group", std::to_string(c.blocks_per_group)},
               {"heads", std::to_string(c.heads)},
               {"mlp_ratio", std::to_string(c.mlp_ratio)},
               {"scale", std::to_string(c.scale)},
               {"extra_scales", join_ints(c.extra_scales)},
               {"max_output_height", std::to_string(c.max_output_height)},
               {"max_output_width", std::to_string(c.max_output_width)},
               {"seed", std::to_string(c.seed)}};
  nn::add_params(ckpt, "live/", gen.params());
  nn::save_checkpoint(ckpt, path);
}

SRGenerator load_generator(const std::string& path) {
  const nn::Checkpoint ckpt = nn::load_checkpoint(path);
  if (ckpt.kind != "sr-generator") throw DecodeError("checkpoint is not an sr-generator");
  SRGeneratorConfig c;
  try {
    c.channels = std::stoi(meta(ckpt, "channels"));
    c.embed_dim = std::stoi(meta(ckpt, "embed_dim"));
    c.window = std::stoi(meta(ckpt, "window"));
    c.overlap_ratio = std::stod(meta(ckpt, "overlap_ratio"));
    c.n_groups = std::stoi(meta(ckpt, "n_groups"));
    c.blocks_per_group = std::stoi(meta(ckpt, "blocks_per_group"));
    c.heads = std::stoi(meta(ckpt, "heads"));
    c.mlp_ratio = std::stoi(meta(ckpt, "mlp_ratio"));
    c.scale = std::stoi(meta(ckpt, "scale"));
    c.extra_scales = split_ints(meta(ckpt, "extra_scales"));
    c.max_output_height = std::stoi(meta(ckpt, "max_output_height"));
    c.max_output_width = std::stoi(meta(ckpt, "max_output_width"));
    c.seed = std::stoull(meta(ckpt, "seed"));
  } catch (const std::logic_error& e) {
    throw DecodeError(std::string("sr-generator metadata: ") + e.what());
  }
  SRGenerator gen(c);
  nn::restore_params(ckpt, "live/", gen.params());
  return gen;
}

void save_discriminator(const std::string& path, const Discriminator& disc) {
  const auto& c = disc.config();
  nn::Checkpoint ckpt;
  ckpt.kind = "sr-discriminator";
  ckpt.meta = {{"channels", std::to_string(c.channels)},
               {"base_channels", std::to_string(c.base_channels)},
               {"depth", std::to_string(c.depth)},
               {"sn_power_iters", std::to_string(c.sn_power_iters)},
               {"seed", std::to_string(c.seed)}};
  nn::add_params(ckpt, "live/", disc.params());
  const auto& states = disc.spectral_states();
  for (std::size_t i = 0; i < states.size(); ++i) {
    const auto& s = states[i];
    if (s.u.size() == 0) continue;
    const std::string n = "sn/" + std::to_string(i);
    ckpt.tensors.emplace_back(n + "/u", nn::Tensor({static_cast<int>(s.u.size())},
                                                   std::vector<double>(s.u.data(), s.u.data() + s.u.size())));
    ckpt.tensors.emplace_back(n + "/v", nn::Tensor({static_cast<int>(s.v.size())},
                                                   std::vector<double>(s.v.data(), s.v.data() + s.v.size())));
  }
  nn::save_checkpoint(ckpt, path);
}

Discriminator load_discriminator(const std::string& path) {
  const nn::Checkpoint ckpt = nn::load_checkpoint(path);
  if (ckpt.kind != "sr-discriminator") throw DecodeError("checkpoint is not an sr-discriminator");
  DiscriminatorConfig c;
  try {
    c.channels = std::stoi(meta(ckpt, "channels"));
    c.base_channels = std::stoi(meta(ckpt, "base_channels"));
    c.depth = std::stoi(meta(ckpt, "depth"));
    c.sn_power_iters = std::stoi(meta(ckpt, "sn_power_iters"));
    c.seed = std::stoull(meta(ckpt, "seed"));
  } catch (const std::logic_error& e) {
    throw DecodeError(std::string("sr-discriminator metadata: ") + e.what());
  }
  Discriminator disc(c);
  nn::restore_params(ckpt, "live/", disc.params());
  auto& states = disc.spectral_states();
  for (std::size_t i = 0; i < states.size(); ++i) {
    const std::string n = "sn/" + std::to_string(i);
    const nn::Tensor* u = ckpt.find(n + "/u");
    const nn::Tensor* v = ckpt.find(n + "/v");
    if (!u || !v) continue;
    states[i].u = Eigen::Map<const Eigen::VectorXd>(u->data(), static_cast<Eigen::Index>(u->numel()));
    states[i].v = Eigen::Map<const Eigen::VectorXd>(v->data(), static_cast<Eigen::Index>(v->numel()));
  }
  return disc;
}

}  // namespace radsynth

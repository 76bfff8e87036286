#include "radsynth/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "radsynth/errors.hpp"
#include "radsynth/nn/attention.hpp"
#include "radsynth/nn/checkpoint.hpp"
#include "radsynth/nn/ops.hpp"

namespace radsynth {

namespace {

nn::Tensor normal_tensor(std::vector<int> shape, double std, Rng& rng) {
  nn::Tensor t(std::move(shape));
  for (double& v : t.values()) v = std * rng.normal();
  return t;
}

nn::Tensor conv_init(int out, int in, int k, Rng& rng, double gain = 1.0) {
  return normal_tensor({out, in, k, k}, gain * std::sqrt(1.0 / (in * k * k)), rng);
}

// Sinusoidal start for the learned table so every row begins distinct.
nn::Tensor sinusoidal_table(int rows, int dim) {
  nn::Tensor t({rows, dim});
  const int half = dim / 2;
  for (int r = 0; r < rows; ++r) {
    const double pos = r + 1;
    for (int i = 0; i < half; ++i) {
      const double freq = std::exp(-std::log(10000.0) * i / std::max(1, half));
      t[static_cast<std::size_t>(r) * dim + i] = std::sin(pos * freq);
      t[static_cast<std::size_t>(r) * dim + half + i] = std::cos(pos * freq);
    }
  }
  return t;
}

}  // namespace

ToyDenoiser::ToyDenoiser(DenoiserConfig config) : config_(std::move(config)) {
  if (config_.widths.empty()) throw ArgumentError("ToyDenoiser: widths must be non-empty");
  for (std::size_t i = 0; i < config_.widths.size(); ++i) {
    if (config_.widths[i] < 1 || (i > 0 && config_.widths[i] <= config_.widths[i - 1])) {
      throw ArgumentError("ToyDenoiser: widths must be positive and strictly increasing");
    }
  }
  if (config_.channels < 1 || config_.timesteps < 1) {
    throw ArgumentError("ToyDenoiser: invalid channels/timesteps");
  }
  const int top = config_.widths.back();
  if (config_.attention_heads < 1 || top % config_.attention_heads != 0) {
    throw ArgumentError("ToyDenoiser: bottleneck width not divisible by heads");
  }
  Rng rng(config_.seed);
  const int w0 = config_.widths.front();
  temb_table_ = param("temb.table", sinusoidal_table(config_.timesteps, w0));
  in_w_ = param("in.w", conv_init(w0, config_.channels, 3, rng));
  in_b_ = param("in.b", nn::Tensor({w0}));
  int prev = w0;
  for (int i = 0; i < levels(); ++i) {
    enc_.push_back(make_block("enc" + std::to_string(i), prev, config_.widths[i], rng));
    prev = config_.widths[i];
  }
  attn_.norm_g = param("mid.attn.norm_g", nn::Tensor({top}, 1.0));
  attn_.norm_b = param("mid.attn.norm_b", nn::Tensor({top}));
  attn_.q_w = param("mid.attn.q_w", conv_init(top, top, 1, rng));
  attn_.k_w = param("mid.attn.k_w", conv_init(top, top, 1, rng));
  attn_.v_w = param("mid.attn.v_w", conv_init(top, top, 1, rng));
  attn_.proj_w = param("mid.attn.proj_w", conv_init(top, top, 1, rng, 0.5));
  attn_.proj_b = param("mid.attn.proj_b", nn::Tensor({top}));
  mid_ = make_block("mid.res", top, top, rng);
  for (int i = levels() - 1; i >= 0; --i) {
    const int up = i == levels() - 1 ? top : config_.widths[i + 1];
    dec_.push_back(make_block("dec" + std::to_string(i), up + config_.widths[i],
                              config_.widths[i], rng));
  }
  out_w_ = param("out.w", conv_init(config_.channels, w0, 3, rng, 0.1));
  out_b_ = param("out.b", nn::Tensor({config_.channels}));
}

nn::Var ToyDenoiser::param(const std::string& name, nn::Tensor init) {
  auto v = nn::parameter(std::move(init));
  params_.push_back({name, v});
  return v;
}

ToyDenoiser::ResBlock ToyDenoiser::make_block(const std::string& name, int in, int out,
                                              Rng& rng) {
  const int d = config_.widths.front();
  ResBlock b;
  b.conv1_w = param(name + ".conv1.w", conv_init(out, in, 3, rng));
  b.conv1_b = param(name + ".conv1.b", nn::Tensor({out}));
  b.temb_w = param(name + ".temb.w", conv_init(out, d, 1, rng));
  b.temb_b = param(name + ".temb.b", nn::Tensor({out}));
  b.conv2_w = param(name + ".conv2.w", conv_init(out, out, 3, rng, 0.5));
  b.conv2_b = param(name + ".conv2.b", nn::Tensor({out}));
  if (in != out) {
    b.skip_w = param(name + ".skip.w", conv_init(out, in, 1, rng));
    b.skip_b = param(name + ".skip.b", nn::Tensor({out}));
  }
  return b;
}

nn::Var ToyDenoiser::run_block(const ResBlock& b, const nn::Var& x, const nn::Var& temb) const {
  nn::Var h = nn::conv2d(nn::silu(x), b.conv1_w, b.conv1_b);
  const nn::Var tproj = nn::conv2d(nn::silu(temb), b.temb_w, b.temb_b);
  h = nn::add_channel_bias(h, tproj);
  h = nn::conv2d(nn::silu(h), b.conv2_w, b.conv2_b);
  const nn::Var skip = b.skip_w ? nn::conv2d(x, b.skip_w, b.skip_b) : x;
  return nn::add(skip, h);
}

nn::Var ToyDenoiser::forward(const nn::Var& x, int t) const {
  const nn::Tensor& xv = x->value;
  if (xv.rank() != 3 || xv.channels() != config_.channels) {
    throw ArgumentError("ToyDenoiser: input must be [C,H,W] with configured channels");
  }
  const int div = 1 << (levels() - 1);
  if (xv.height() % div || xv.width() % div || xv.height() == 0 || xv.width() == 0) {
    throw ArgumentError("ToyDenoiser: spatial dims must be divisible by 2^(levels-1)");
  }
  if (t < 1 || t > config_.timesteps) throw ArgumentError("ToyDenoiser: timestep out of range");

  const nn::Var temb = nn::embedding_row(temb_table_, t - 1);
  nn::Var h = nn::conv2d(x, in_w_, in_b_);
  std::vector<nn::Var> skips;
  for (int i = 0; i < levels(); ++i) {
    h = run_block(enc_[i], h, temb);
    skips.push_back(h);
    if (i < levels() - 1) h = nn::avg_pool2(h);
  }

  const nn::Var a = nn::layer_norm_channels(h, attn_.norm_g, attn_.norm_b);
  const nn::Var q = nn::conv2d(a, attn_.q_w, nullptr);
  const nn::Var k = nn::conv2d(a, attn_.k_w, nullptr);
  const nn::Var v = nn::conv2d(a, attn_.v_w, nullptr);
  const nn::WindowSpec global{h->value.height(), h->value.width(), 0};
  const nn::Var att = nn::windowed_attention(q, k, v, config_.attention_heads, global);
  h = nn::add(h, nn::conv2d(att, attn_.proj_w, attn_.proj_b));
  h = run_block(mid_, h, temb);

  for (int j = 0; j < levels(); ++j) {
    const int i = levels() - 1 - j;
    if (i < levels() - 1) h = nn::upsample_nearest2(h);
    h = nn::concat_channels(h, skips[i]);
    h = run_block(dec_[j], h, temb);
  }
  return nn::conv2d(nn::silu(h), out_w_, out_b_);
}

ImageGrid ToyDenoiser::predict(const ImageGrid& x_t, int t) const {
  nn::NoGradGuard guard;
  return nn::to_image(forward(nn::constant(nn::from_image(x_t)), t)->value);
}

std::vector<ImageGrid> ToyDenoiser::predict_batch(const std::vector<ImageGrid>& xs,
                                                  const std::vector<int>& ts) const {
  if (xs.size() != ts.size()) throw ArgumentError("predict_batch: size mismatch");
  std::vector<ImageGrid> out;
  out.reserve(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) out.push_back(predict(xs[i], ts[i]));
  return out;
}

std::vector<nn::Tensor> ToyDenoiser::weights() const {
  std::vector<nn::Tensor> w;
  w.reserve(params_.size());
  for (const auto& p : params_) w.push_back(p.var->value);
  return w;
}

void ToyDenoiser::set_weights(const std::vector<nn::Tensor>& weights) {
  if (weights.size() != params_.size()) throw ArgumentError("set_weights: count mismatch");
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (!weights[i].same_shape(params_[i].var->value)) {
      throw ArgumentError("set_weights: shape mismatch for " + params_[i].name);
    }
    params_[i].var->value = weights[i];
  }
}

void ema_update(EmaParams& ema, const nn::ParamList& params, long k) {
  const long kk = std::clamp(k, 0L, ema.schedule.total_steps);
  ema.shadow.update(params, ema_gamma(kk, ema.schedule));
}

DenoiserTrainer::DenoiserTrainer(ToyDenoiser& net, nn::AdamWConfig opt, EmaSchedule ema)
    : net_(&net), opt_(net.params(), opt), ema_{nn::EmaShadow(net.params()), ema} {}

TrainStats DenoiserTrainer::train_step(const std::vector<ImageGrid>& batch,
                                       const NoiseSchedule& sched, Rng& rng) {
  if (batch.empty()) throw ArgumentError("train_step: empty batch");
  std::vector<NoisyExample> examples;
  examples.reserve(batch.size());
  for (const ImageGrid& x0 : batch) {
    NoisyExample ex;
    ex.x0 = x0;
    ex.t = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(sched.steps())));
    ex.eps = ImageGrid(x0.height(), x0.width(), x0.channels());
    for (double& v : ex.eps.values()) v = rng.normal();
    examples.push_back(std::move(ex));
  }
  return train_on(examples, sched);
}

TrainStats DenoiserTrainer::train_on(const std::vector<NoisyExample>& examples,
                                     const NoiseSchedule& sched) {
  if (examples.empty()) throw ArgumentError("train_on: empty batch");
  const auto& params = net_->params();
  nn::zero_grad(params);
  double total = 0.0;
  const double inv = 1.0 / static_cast<double>(examples.size());
  for (const NoisyExample& ex : examples) {
    const ImageGrid x_t = forward_noise_with(to_model_domain(ex.x0), ex.t, sched, ex.eps);
    const nn::Var pred = net_->forward(nn::constant(nn::from_image(x_t)), ex.t);
    const nn::Var loss = nn::l1_loss(pred, nn::constant(nn::from_image(ex.eps)));
    total += loss->value[0] * inv;
    nn::backward(loss, inv);
  }
  if (!std::isfinite(total)) {
    throw NumericError("train_step: non-finite loss at update " + std::to_string(updates_));
  }
  TrainStats stats;
  stats.loss = total;
  stats.grad_norm = nn::clip_grad_norm(params, opt_.config().clip_norm);
  opt_.step();
  ++updates_;
  ema_update(ema_, params, updates_);
  stats.step = updates_;
  stats.gamma = ema_gamma(std::clamp(updates_, 0L, ema_.schedule.total_steps), ema_.schedule);
  return stats;
}

double noise_l1_loss(const ToyDenoiser& net, const std::vector<NoisyExample>& examples,
                     const NoiseSchedule& sched) {
  if (examples.empty()) throw ArgumentError("noise_l1_loss: no examples");
  double total = 0.0;
  for (const NoisyExample& ex : examples) {
    const ImageGrid x_t = forward_noise_with(to_model_domain(ex.x0), ex.t, sched, ex.eps);
    const ImageGrid pred = net.predict(x_t, ex.t);
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) acc += std::abs(pred.values()[i] - ex.eps.values()[i]);
    total += acc / static_cast<double>(pred.size());
  }
  return total / static_cast<double>(examples.size());
}

nn::GradCheckResult grad_check(const ToyDenoiser& net, const NoisyExample& probe,
                               const NoiseSchedule& sched, double epsilon, int samples,
                               const std::string& prefix, double delta, std::uint64_t seed) {
  if (!(epsilon >= 1e-6 && epsilon <= 1e-3)) {
    throw ArgumentError("grad_check: epsilon must lie in [1e-6, 1e-3]");
  }
  const ImageGrid x_t = forward_noise_with(to_model_domain(probe.x0), probe.t, sched, probe.eps);
  const nn::Var input = nn::constant(nn::from_image(x_t));
  const nn::Var target = nn::constant(nn::from_image(probe.eps));
  auto loss_fn = [&] { return nn::l1_loss(net.forward(input, probe.t), target, delta); };
  Rng rng(seed);
  return nn::finite_difference_check(loss_fn, net.params(), samples, epsilon, rng, prefix);
}

void write_loss_csv(const std::vector<TrainStats>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "step,loss,grad_norm,gamma_k\n";
  out.precision(10);
  for (const auto& r : rows) {
    out << r.step << ',' << r.loss << ',' << r.grad_norm << ',' << r.gamma << '\n';
  }
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
  while (std::getline(in, tok, ',')) out.push_back(std::stoi(tok));
  return out;
}
}  // namespace

void save_denoiser(const std::string& path, const ToyDenoiser& net, const EmaParams* ema,
                   const NoiseSchedule* sched) {
  nn::Checkpoint ckpt;
  ckpt.kind = "toy-denoiser";
  const auto& cfg = net.config();
  ckpt.meta["widths"] = join_ints(cfg.widths);
  ckpt.meta["channels"] = std::to_string(cfg.channels);
  ckpt.meta["timesteps"] = std::to_string(cfg.timesteps);
  ckpt.meta["attention_heads"] = std::to_string(cfg.attention_heads);
  ckpt.meta["seed"] = std::to_string(cfg.seed);
  if (sched) ckpt.meta["schedule"] = sched->serialize();
  nn::add_params(ckpt, "live/", net.params());
  if (ema) {
    const auto& shadow = ema->shadow.weights();
    for (std::size_t i = 0; i < shadow.size(); ++i) {
      ckpt.tensors.emplace_back("ema/" + net.params()[i].name, shadow[i]);
    }
    ckpt.meta["ema_gamma0"] = std::to_string(ema->schedule.gamma0);
    ckpt.meta["ema_total_steps"] = std::to_string(ema->schedule.total_steps);
  }
  nn::save_checkpoint(ckpt, path);
}

ToyDenoiser load_denoiser(const std::string& path, bool use_ema) {
  const nn::Checkpoint ckpt = nn::load_checkpoint(path);
  if (ckpt.kind != "toy-denoiser") throw DecodeError("checkpoint is not a toy-denoiser");
  DenoiserConfig cfg;
  try {
    cfg.widths = split_ints(ckpt.meta.at("widths"));
    cfg.channels = std::stoi(ckpt.meta.at("channels"));
    cfg.timesteps = std::stoi(ckpt.meta.at("timesteps"));
    cfg.attention_heads = std::stoi(ckpt.meta.at("attention_heads"));
    cfg.seed = std::stoull(ckpt.meta.at("seed"));
  } catch (const std::exception& e) {
    throw DecodeError(std::string("denoiser checkpoint metadata: ") + e.what());
  }
  ToyDenoiser net(cfg);
  const bool has_ema = ckpt.find("ema/" + net.params().front().name) != nullptr;
  nn::restore_params(ckpt, use_ema && has_ema ? "ema/" : "live/", net.params());
  return net;
}

}  // namespace radsynth

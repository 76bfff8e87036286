#include "radsynth/sr_losses.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "radsynth/errors.hpp"
#include "radsynth/nn/ops.hpp"

namespace radsynth {

namespace {

void require_same(const ImageGrid& a, const ImageGrid& b, const char* op) {
  if (!a.same_shape(b)) throw ArgumentError(std::string(op) + ": shape mismatch");
  if (a.empty()) throw ArgumentError(std::string(op) + ": empty image");
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double mean_softplus(const ImageGrid& g, double sign) {
  if (g.empty()) throw ArgumentError("gan loss: empty map");
  double s = 0.0;
  for (double v : g.values()) s += softplus(sign * v);
  return s / static_cast<double>(g.size());
}

nn::Var as_var(const ImageGrid& g) { return nn::constant(nn::from_image(g)); }

}  // namespace

void LossWeights::validate() const {
  if (pixel < 0 || perceptual < 0 || adversarial < 0) {
    throw ArgumentError("LossWeights: weights must be nonnegative");
  }
  if (pixel == 0 && perceptual == 0 && adversarial == 0) {
    throw ArgumentError("LossWeights: weights must not all be zero");
  }
}

ToyConvExtractor::ToyConvExtractor(int channels, std::vector<int> widths, std::uint64_t seed) {
  Rng rng(seed);
  int in = channels;
  for (int w : widths) {
    nn::Tensor t({w, in, 3, 3});
    const double std = std::sqrt(2.0 / (in * 9));
    for (double& v : t.values()) v = std * rng.normal();
    weights_.push_back(nn::constant(std::move(t)));
    in = w;
  }
}

std::vector<nn::Var> ToyConvExtractor::features(const nn::Var& image) const {
  std::vector<nn::Var> out;
  nn::Var h = image;
  for (const auto& w : weights_) {
    h = nn::relu(nn::conv2d(h, w, nullptr));
    out.push_back(h);
    if (h->value.height() % 2 == 0 && h->value.width() % 2 == 0) h = nn::avg_pool2(h);
  }
  return out;
}

double l1_loss(const ImageGrid& gen, const ImageGrid& gt) {
  require_same(gen, gt, "l1_loss");
  double s = 0.0;
  for (std::size_t i = 0; i < gen.size(); ++i) s += std::abs(gen.values()[i] - gt.values()[i]);
  return s / static_cast<double>(gen.size());
}

nn::Var perceptual_loss(const FeatureExtractor& phi, const nn::Var& gen, const nn::Var& gt) {
  if (!gen->value.same_shape(gt->value)) throw ArgumentError("perceptual_loss: shape mismatch");
  const auto fa = phi.features(gen);
  std::vector<nn::Var> fb;
  {
    nn::NoGradGuard guard;
    fb = phi.features(gt);
  }
  if (fa.size() != fb.size() || fa.empty()) throw ArgumentError("perceptual_loss: layer mismatch");
  nn::Var total = nn::mse_loss(fa[0], fb[0]);
  for (std::size_t i = 1; i < fa.size(); ++i) total = nn::add(total, nn::mse_loss(fa[i], fb[i]));
  return total;
}

double perceptual_loss(const FeatureExtractor& phi, const ImageGrid& gen, const ImageGrid& gt) {
  require_same(gen, gt, "perceptual_loss");
  nn::NoGradGuard guard;
  return perceptual_loss(phi, as_var(gen), as_var(gt))->value[0];
}

double gan_loss_discriminator(const ImageGrid& d_real, const ImageGrid& d_fake) {
  return mean_softplus(d_real, -1.0) + mean_softplus(d_fake, 1.0);
}

nn::Var gan_loss_discriminator(const nn::Var& d_real, const nn::Var& d_fake) {
  return nn::add(nn::mean_softplus(nn::scale(d_real, -1.0)), nn::mean_softplus(d_fake));
}

double gan_loss_generator(const ImageGrid& d_fake) { return mean_softplus(d_fake, -1.0); }

nn::Var gan_loss_generator(const nn::Var& d_fake) {
  return nn::mean_softplus(nn::scale(d_fake, -1.0));
}

double total_loss(const LossWeights& w, double l1, double lp, double lg) {
  return w.pixel * l1 + w.perceptual * lp + w.adversarial * lg;
}

double psnr(const ImageGrid& a, const ImageGrid& b, double peak) {
  require_same(a, b, "psnr");
  double mse = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.values()[i] - b.values()[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

SrTrainer::SrTrainer(SRGenerator& gen, Discriminator& disc, const FeatureExtractor& phi,
                     LossWeights w, nn::AdamWConfig gen_opt, nn::AdamWConfig disc_opt)
    : gen_(&gen),
      disc_(&disc),
      phi_(&phi),
      weights_(w),
      gen_opt_(gen.params(), gen_opt),
      disc_opt_(disc.params(), disc_opt) {
  weights_.validate();
}

SrStepStats SrTrainer::step(const std::vector<DegradedPair>& batch) {
  if (batch.empty()) throw ArgumentError("SrTrainer: empty batch");
  const double inv = 1.0 / static_cast<double>(batch.size());
  SrStepStats stats;

  std::vector<nn::Var> fakes;
  {
    nn::NoGradGuard guard;
    for (const auto& p : batch) fakes.push_back(nn::constant(gen_->forward(as_var(p.lr), p.scale)->value));
  }
  nn::zero_grad(disc_->params());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const nn::Var d_real = disc_->forward(as_var(batch[i].hr), true);
    const nn::Var d_fake = disc_->forward(fakes[i], true);
    const nn::Var loss = gan_loss_discriminator(d_real, d_fake);
    stats.d_loss += loss->value[0] * inv;
    nn::backward(loss, inv);
  }
  if (!std::isfinite(stats.d_loss)) {
    throw NumericError("SrTrainer: non-finite discriminator loss at step " + std::to_string(steps_));
  }
  nn::clip_grad_norm(disc_->params(), disc_opt_.config().clip_norm);
  disc_opt_.step();

  nn::zero_grad(gen_->params());
  for (const auto& p : batch) {
    const nn::Var hr = as_var(p.hr);
    const nn::Var fake = gen_->forward(as_var(p.lr), p.scale);
    const nn::Var l1 = nn::l1_loss(fake, hr);
    nn::Var total = nn::scale(l1, weights_.pixel);
    stats.l1 += l1->value[0] * inv;
    if (weights_.perceptual > 0) {
      const nn::Var lp = perceptual_loss(*phi_, fake, hr);
      stats.lp += lp->value[0] * inv;
      total = nn::add(total, nn::scale(lp, weights_.perceptual));
    }
    if (weights_.adversarial > 0) {
      const nn::Var lg = gan_loss_generator(disc_->forward(fake, true));
      stats.lg += lg->value[0] * inv;
      total = nn::add(total, nn::scale(lg, weights_.adversarial));
    }
    stats.total += total->value[0] * inv;
    nn::backward(total, inv);
  }
  nn::zero_grad(disc_->params());
  if (!std::isfinite(stats.total)) {
    throw NumericError("SrTrainer: non-finite generator loss at step " + std::to_string(steps_) +
                       " (l1=" + std::to_string(stats.l1) + ", lp=" + std::to_string(stats.lp) +
                       ", lg=" + std::to_string(stats.lg) + ")");
  }
  nn::clip_grad_norm(gen_->params(), gen_opt_.config().clip_norm);
  gen_opt_.step();
  stats.step = ++steps_;
  return stats;
}

SrStepStats SrTrainer::step(const PairPool& pool, const std::vector<ImageGrid>& hr_corpus,
                            Rng& rng, int batch_size) {
  if (batch_size < 1) throw ArgumentError("SrTrainer: batch_size must be >= 1");
  std::vector<DegradedPair> batch;
  for (int i = 0; i < batch_size; ++i) batch.push_back(pool_draw(pool, hr_corpus, rng).pair);
  return step(batch);
}

void write_sr_loss_csv(const std::vector<SrStepStats>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "step,l1,lp,lg,total,d_loss\n";
  out.precision(10);
  for (const auto& r : rows) {
    out << r.step << ',' << r.l1 << ',' << r.lp << ',' << r.lg << ',' << r.total << ','
        << r.d_loss << '\n';
  }
}

}  // namespace radsynth

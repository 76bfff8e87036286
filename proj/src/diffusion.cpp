#include "radsynth/diffusion.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <thread>

#include "radsynth/errors.hpp"

namespace radsynth {

namespace {

void require_same_shape(const ImageGrid& a, const ImageGrid& b, const char* what) {
  if (!a.same_shape(b)) throw ArgumentError(std::string(what) + ": shape mismatch");
}

ImageGrid gaussian_like(int h, int w, int c, Rng& rng) {
  ImageGrid g(h, w, c);
  for (double& v : g.values()) v = rng.normal();
  return g;
}

}  // namespace

ImageGrid to_model_domain(const ImageGrid& display) {
  ImageGrid out = display;
  for (double& v : out.values()) v = 2.0 * v - 1.0;
  return out;
}

ImageGrid to_display_domain(const ImageGrid& model) {
  ImageGrid out = model;
  for (double& v : out.values()) v = (v + 1.0) / 2.0;
  out.clamp();
  return out;
}

ImageGrid forward_noise_with(const ImageGrid& x0_model, int t, const NoiseSchedule& sched,
                             const ImageGrid& eps) {
  if (t < 0 || t > sched.steps()) throw ArgumentError("forward_noise: t out of range");
  require_same_shape(x0_model, eps, "forward_noise");
  const double ab = sched.alpha_bar(t);
  if (t == 0) return x0_model;
  const double a = std::sqrt(ab);
  const double b = std::sqrt(1.0 - ab);
  ImageGrid out = x0_model;
  auto o = out.values();
  const auto e = eps.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a * o[i] + b * e[i];
  return out;
}

NoisedSample forward_noise(const ImageGrid& x0, int t, const NoiseSchedule& sched, Rng& rng) {
  if (t < 0 || t > sched.steps()) throw ArgumentError("forward_noise: t out of range");
  ImageGrid eps = gaussian_like(x0.height(), x0.width(), x0.channels(), rng);
  ImageGrid x_t = forward_noise_with(to_model_domain(x0), t, sched, eps);
  return {std::move(x_t), std::move(eps)};
}

double ddim_sigma(int t, int t_prev, const NoiseSchedule& sched, double eta) {
  if (eta == 0.0) return 0.0;
  const double ab = sched.alpha_bar(t);
  const double ab_prev = sched.alpha_bar(t_prev);
  return eta * std::sqrt((1.0 - ab_prev) / (1.0 - ab)) * std::sqrt(1.0 - ab / ab_prev);
}

ImageGrid predict_x0(const ImageGrid& x_t, int t, const ImageGrid& eps_hat,
                     const NoiseSchedule& sched) {
  require_same_shape(x_t, eps_hat, "predict_x0");
  const double ab = sched.alpha_bar(t);
  const double sa = std::sqrt(ab);
  const double sb = std::sqrt(1.0 - ab);
  ImageGrid x0 = x_t;
  auto o = x0.values();
  const auto e = eps_hat.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = (o[i] - sb * e[i]) / sa;
  return x0;
}

ImageGrid ddim_step(const ImageGrid& x_t, int t, int t_prev, const ImageGrid& eps_hat,
                    const NoiseSchedule& sched, const SamplerConfig& cfg, Rng& rng) {
  if (!(t > t_prev && t_prev >= 0 && t <= sched.steps())) {
    throw ArgumentError("ddim_step: need T >= t > t_prev >= 0");
  }
  if (cfg.eta < 0.0) throw ArgumentError("ddim_step: eta must be >= 0");
  require_same_shape(x_t, eps_hat, "ddim_step");

  ImageGrid x0 = predict_x0(x_t, t, eps_hat, sched);
  if (cfg.clip_denoised) x0.clamp(-1.0, 1.0);

  const double ab_prev = sched.alpha_bar(t_prev);
  const double sigma = ddim_sigma(t, t_prev, sched, cfg.eta);
  double radicand = 1.0 - ab_prev - sigma * sigma;
  if (radicand < 0.0) {
    if (radicand > -1e-12) {
      radicand = 0.0;
    } else {
      throw NumericError("ddim_step: sigma_t^2 exceeds 1 - alpha_bar_prev");
    }
  }
  const double dir = std::sqrt(radicand);
  const double sa_prev = std::sqrt(ab_prev);

  ImageGrid out = x0;
  auto o = out.values();
  const auto e = eps_hat.values();
  for (std::size_t i = 0; i < o.size(); ++i) {
    o[i] = sa_prev * o[i] + dir * e[i];
    if (sigma > 0.0) o[i] += sigma * rng.normal();
  }
  return out;
}

double ddpm_posterior_variance(int t, const NoiseSchedule& sched) {
  if (t < 1 || t > sched.steps()) throw ArgumentError("ddpm: t out of range");
  return sched.beta(t) * (1.0 - sched.alpha_bar(t - 1)) / (1.0 - sched.alpha_bar(t));
}

ImageGrid ddpm_step(const ImageGrid& x_t, int t, const ImageGrid& eps_hat,
                    const NoiseSchedule& sched, Rng& rng) {
  if (t < 1 || t > sched.steps()) throw ArgumentError("ddpm_step: t must be in [1, T]");
  require_same_shape(x_t, eps_hat, "ddpm_step");
  const double beta = sched.beta(t);
  const double alpha = sched.alpha(t);
  const double coef = beta / std::sqrt(1.0 - sched.alpha_bar(t));
  const double inv_sqrt_alpha = 1.0 / std::sqrt(alpha);
  const double sd = std::sqrt(ddpm_posterior_variance(t, sched));
  ImageGrid out = x_t;
  auto o = out.values();
  const auto e = eps_hat.values();
  for (std::size_t i = 0; i < o.size(); ++i) {
    o[i] = inv_sqrt_alpha * (o[i] - coef * e[i]);
    if (sd > 0.0) o[i] += sd * rng.normal();
  }
  return out;
}

ImageGrid sample_model_domain(const NoisePredictor& pred, const NoiseSchedule& sched,
                              const SamplerConfig& cfg, SampleShape shape, Rng& rng) {
  if (cfg.inference_steps > sched.steps()) {
    throw ArgumentError("sample: inference_steps exceeds schedule length");
  }
  if (shape.resolution.width <= 0 || shape.resolution.height <= 0 || shape.channels < 1) {
    throw ArgumentError("sample: invalid shape");
  }
  const auto seq = ddim_subsequence(sched.steps(), cfg.inference_steps);
  Rng init = rng.derive("init");
  Rng step_rng = rng.derive("step");
  ImageGrid x = gaussian_like(shape.resolution.height, shape.resolution.width,
                              shape.channels, init);
  for (int i = static_cast<int>(seq.size()) - 1; i >= 0; --i) {
    const int t = seq[i];
    const int t_prev = i > 0 ? seq[i - 1] : 0;
    const ImageGrid eps = pred.predict(x, t);
    if (!eps.same_shape(x)) throw ArgumentError("sample: predictor changed the shape");
    x = ddim_step(x, t, t_prev, eps, sched, cfg, step_rng);
  }
  return x;
}

ImageGrid sample(const NoisePredictor& pred, const NoiseSchedule& sched,
                 const SamplerConfig& cfg, SampleShape shape, Rng& rng) {
  return to_display_domain(sample_model_domain(pred, sched, cfg, shape, rng));
}

std::vector<ImageGrid> sample_batch(const NoisePredictor& pred, const NoiseSchedule& sched,
                                    const SamplerConfig& cfg, SampleShape shape,
                                    const std::vector<std::uint64_t>& seeds, int threads) {
  std::vector<ImageGrid> out(seeds.size());
  auto run_one = [&](std::size_t i) {
    Rng rng(seeds[i]);
    out[i] = sample(pred, sched, cfg, shape, rng);
  };
  const int workers = pred.thread_safe() ? std::max(1, threads) : 1;
  if (workers == 1 || seeds.size() < 2) {
    for (std::size_t i = 0; i < seeds.size(); ++i) run_one(i);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < seeds.size(); i = next++) {
        try {
          run_one(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
  return out;
}

AnalyticGaussianPredictor::AnalyticGaussianPredictor(const NoiseSchedule& sched, ImageGrid mu,
                                                     double s2)
    : sched_(&sched), mu_(std::move(mu)), s2_(s2) {
  if (s2 < 0.0) throw ArgumentError("analytic predictor: s2 must be >= 0");
}

ImageGrid AnalyticGaussianPredictor::predict(const ImageGrid& x_t, int t) const {
  require_same_shape(x_t, mu_, "analytic predictor");
  const double ab = sched_->alpha_bar(t);
  const double sa = std::sqrt(ab);
  const double num = std::sqrt(1.0 - ab);
  const double den = ab * s2_ + 1.0 - ab;
  ImageGrid eps = x_t;
  auto o = eps.values();
  const auto m = mu_.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = num * (o[i] - sa * m[i]) / den;
  return eps;
}

std::unique_ptr<NoisePredictor> analytic_gaussian_predictor(const NoiseSchedule& sched,
                                                            ImageGrid mu, double s2) {
  return std::make_unique<AnalyticGaussianPredictor>(sched, std::move(mu), s2);
}

std::vector<DiagnosticRow> noising_diagnostics(const ImageGrid& x0,
                                               const NoiseSchedule& sched,
                                               const std::vector<int>& probe_ts, Rng& rng) {
  std::vector<DiagnosticRow> rows;
  rows.reserve(probe_ts.size());
  for (int t : probe_ts) {
    if (t < 0 || t > sched.steps()) throw ArgumentError("noising_diagnostics: bad probe t");
    const PixelStats s =
        t == 0 ? pixel_stats(x0)
               : pixel_stats(to_display_domain(forward_noise(x0, t, sched, rng).x_t));
    rows.push_back({t, s.mean, s.std});
  }
  return rows;
}

void write_diagnostics_csv(const std::vector<DiagnosticRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "t,mean,std\n";
  out.precision(10);
  for (const auto& r : rows) out << r.t << ',' << r.mean << ',' << r.std << '\n';
}

std::string sample_filename(std::uint64_t seed, int step) {
  return std::to_string(seed) + "_" + std::to_string(step) + ".png";
}

}  // namespace radsynth

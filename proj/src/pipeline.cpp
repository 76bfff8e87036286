#include "radsynth/pipeline.hpp"

#include <fcntl.h>
#include <openssl/sha.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "radsynth/diffusion.hpp"
#include "radsynth/denoiser.hpp"
#include "radsynth/errors.hpp"
#include "radsynth/metrics.hpp"
#include "radsynth/sr_model.hpp"
#include "radsynth/study.hpp"

namespace radsynth {

namespace fs = std::filesystem;

namespace {

double smoothstep_band(double d, double half_width, double softness) {
  return 1.0 / (1.0 + std::exp((std::abs(d) - half_width) / softness));
}

std::string hex(const unsigned char* digest, std::size_t n) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(digits[digest[i] >> 4]);
    out.push_back(digits[digest[i] & 15]);
  }
  return out;
}

std::string sha1_hex(std::string_view data) {
  unsigned char digest[SHA_DIGEST_LENGTH];
  SHA1(reinterpret_cast<const unsigned char*>(data.data()), data.size(), digest);
  return hex(digest, SHA_DIGEST_LENGTH);
}

std::vector<unsigned char> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::string fmt(double v) {
  std::ostringstream o;
  o.precision(17);
  o << v;
  return o.str();
}

void emit(const LogFn& log, const std::string& msg) {
  if (log) log(msg);
}

}  // namespace

ImageGrid toy_radiograph(Resolution res, std::uint64_t seed) {
  if (res.width < 4 || res.height < 4) throw ArgumentError("toy_radiograph: resolution too small");
  Rng rng = Rng(seed).derive("toy-radiograph");
  const double arch_depth = 0.12 + 0.12 * rng.uniform();
  const double arch_center = 0.42 + 0.08 * rng.uniform();
  const double band_half = 0.10 + 0.04 * rng.uniform();
  const double band_level = 0.30 + 0.10 * rng.uniform();
  const double tooth_level = 0.75 + 0.15 * rng.uniform();
  const double gap = 0.07 + 0.02 * rng.uniform();
  const int teeth = 10 + static_cast<int>(rng.below(5));
  const double span = 0.55 + 0.1 * rng.uniform();
  const double shadow = 0.15 + 0.1 * rng.uniform();
  struct Tooth {
    double u, v, ru, rv, level;
  };
  std::vector<Tooth> crowns;
  for (int row = 0; row < 2; ++row) {
    for (int k = 0; k < teeth; ++k) {
      if (rng.uniform() < 0.08) continue;  // missing tooth
      const double u = 0.5 + span * ((k + 0.5) / teeth - 0.5) + 0.005 * rng.normal();
      const double du = (u - 0.5) / 0.5;
      const double arch = arch_center + arch_depth * du * du;
      Tooth t;
      t.u = u;
      t.v = arch + (row == 0 ? -gap : gap);
      t.ru = 0.4 * span / teeth;
      t.rv = 0.06 + 0.02 * rng.uniform();
      t.level = tooth_level * (0.85 + 0.15 * rng.uniform());
      crowns.push_back(t);
    }
  }
  ImageGrid g(res.height, res.width);
  const double aspect = static_cast<double>(res.width) / res.height;
  for (int y = 0; y < res.height; ++y) {
    const double v = (y + 0.5) / res.height;
    for (int x = 0; x < res.width; ++x) {
      const double u = (x + 0.5) / res.width;
      const double du = (u - 0.5) / 0.5;
      double val = 0.06 + 0.05 * v;
      val += band_level * smoothstep_band(v - (arch_center + arch_depth * du * du), band_half, 0.02);
      val += shadow * (smoothstep_band(u - 0.04, 0.05, 0.02) + smoothstep_band(u - 0.96, 0.05, 0.02));
      for (const Tooth& t : crowns) {
        const double a = (u - t.u) * aspect / (t.ru * aspect), b = (v - t.v) / t.rv;
        const double r2 = a * a + b * b;
        if (r2 < 4.0) val = std::max(val, t.level / (1.0 + std::exp((r2 - 1.0) / 0.15)));
      }
      g.at(y, x) = val;
    }
  }
  return g.clamp();
}

std::vector<ImageGrid> toy_corpus(std::size_t n, Resolution res, std::uint64_t seed) {
  std::vector<ImageGrid> out;
  out.reserve(n);
  const Rng root(seed);
  for (std::size_t i = 0; i < n; ++i) out.push_back(toy_radiograph(res, root.derive(i).key()));
  return out;
}

void write_corpus(const std::vector<ImageGrid>& images, const std::string& dir,
                  const std::string& prefix) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < images.size(); ++i) {
    char name[64];
    std::snprintf(name, sizeof(name), "_%04zu.png", i);
    save_png(images[i], (fs::path(dir) / (prefix + name)).string(), BitDepth::k16);
  }
}

std::vector<ImageGrid> load_corpus(const std::string& dir) {
  std::vector<ImageGrid> out;
  for (const auto& p : list_png_files(dir)) out.push_back(to_grayscale(load_png(p)));
  return out;
}

std::map<std::string, CropRect> read_crop_rects(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read crop rectangles " + path);
  std::map<std::string, CropRect> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream fields(line);
    std::string file;
    CropRect r;
    if (!(fields >> file >> r.x >> r.y >> r.width >> r.height) || r.width <= 0 || r.height <= 0 ||
        r.x < 0 || r.y < 0) {
      throw ArgumentError(path + ":" + std::to_string(lineno) + ": expected file,x,y,width,height");
    }
    out[file] = r;
  }
  return out;
}

PrepareSummary prepare_dataset(const PrepareOptions& options) {
  const std::vector<std::string> files = list_png_files(options.in_dir);
  if (files.empty()) throw ArgumentError("prepare: no PNG files in " + options.in_dir);
  if (options.hr.width < 1 || options.hr.height < 1 || options.lr.width < 1 || options.lr.height < 1) {
    throw ArgumentError("prepare: invalid target resolution");
  }
  const auto rects = options.rects_file.empty() ? std::map<std::string, CropRect>{}
                                                : read_crop_rects(options.rects_file);
  const fs::path out(options.out_dir);
  fs::create_directories(out / "hr");
  fs::create_directories(out / "lr");
  PrepareSummary summary;
  summary.manifest = (out / "manifest.csv").string();
  std::ostringstream manifest;
  manifest << "id,source,status,hr_hash,lr_hash,detail\n";
  for (const auto& file : files) {
    const fs::path src(file);
    const std::string id = src.stem().string();
    ImageGrid img;
    try {
      img = to_grayscale(load_png(file));
      if (const auto it = rects.find(src.filename().string()); it != rects.end()) {
        const CropRect& r = it->second;
        img = crop(img, r.x, r.y, r.width, r.height);
      }
    } catch (const DecodeError& e) {
      ++summary.skipped;
      std::string why = e.what();
      std::replace(why.begin(), why.end(), ',', ';');
      manifest << id << ',' << src.filename().string() << ",skipped,,," << why << '\n';
      continue;
    }
    const ImageGrid hr = resize_lanczos(img, options.hr).clamp();
    const ImageGrid lr = resize_lanczos(hr, options.lr).clamp();
    const std::string hr_path = (out / "hr" / (id + ".png")).string();
    const std::string lr_path = (out / "lr" / (id + ".png")).string();
    save_png(hr, hr_path, BitDepth::k16);
    save_png(lr, lr_path, BitDepth::k16);
    manifest << id << ',' << src.filename().string() << ",ok," << hash_file(hr_path) << ','
             << hash_file(lr_path) << ",\n";
    ++summary.written;
  }
  {
    std::ofstream m(summary.manifest);
    if (!m) throw IoError("cannot write " + summary.manifest);
    m << manifest.str();
  }
  return summary;
}

std::string git_blob_hash(std::span<const unsigned char> bytes) {
  std::string data = "blob " + std::to_string(bytes.size());
  data.push_back('\0');
  data.append(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  return sha1_hex(data);
}

std::string hash_file(const std::string& path) { return git_blob_hash(read_bytes(path)); }

std::string hash_inputs(const std::vector<std::string>& paths) {
  std::vector<std::string> lines;
  for (const auto& p : paths) {
    if (fs::is_directory(p)) {
      for (const auto& e : fs::recursive_directory_iterator(p)) {
        if (!e.is_regular_file()) continue;
        lines.push_back(fs::relative(e.path(), fs::path(p).parent_path()).generic_string() + ' ' +
                        hash_file(e.path().string()));
      }
    } else if (fs::is_regular_file(p)) {
      lines.push_back(fs::path(p).filename().generic_string() + ' ' + hash_file(p));
    } else {
      throw IoError("input not found: " + p);
    }
  }
  std::sort(lines.begin(), lines.end());
  std::string joined;
  for (const auto& l : lines) joined += l + '\n';
  return sha1_hex(joined);
}

void write_run_record(const std::string& out_dir, const RunRecord& record) {
  nlohmann::ordered_json j;
  j["command"] = record.command;
  j["seed"] = record.seed;
  j["config"] = record.config;
  nlohmann::ordered_json inputs = nlohmann::ordered_json::array();
  for (const auto& p : record.inputs) {
    inputs.push_back({{"path", p}, {"hash", hash_inputs({p})}});
  }
  j["inputs"] = inputs;
  j["input_hash"] = hash_inputs(record.inputs);
  fs::create_directories(out_dir);
  write_file_atomic((fs::path(out_dir) / "run.json").string(), j.dump(2) + "\n");
}

OutputLock::OutputLock(const std::string& dir) {
  fs::create_directories(dir);
  path_ = (fs::path(dir) / ".lock").string();
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    const std::string p = path_;
    path_.clear();
    throw StateError("output directory is locked by another run: " + p);
  }
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] const auto n = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

OutputLock::~OutputLock() {
  if (!path_.empty()) {
    std::error_code ec;
    fs::remove(path_, ec);
  }
}

void PipelineConfig::validate() const {
  if (out_dir.empty()) throw ArgumentError("out_dir is required");
  if (!corpus_dir.empty() && !fs::is_directory(corpus_dir)) {
    throw ArgumentError("corpus_dir does not exist: " + corpus_dir);
  }
  if (corpus_size < 2 && corpus_dir.empty()) throw ArgumentError("corpus_size must be >= 2");
  if (sr_scale < 2 || sr_scale > 4) throw ArgumentError("sr_scale must be 2, 3 or 4");
  if (hr.width % sr_scale || hr.height % sr_scale) {
    throw ArgumentError("hr resolution must be divisible by sr_scale");
  }
  if (timesteps < 2) throw ArgumentError("timesteps must be >= 2");
  if (inference_steps < 1 || inference_steps > timesteps) {
    throw ArgumentError("inference_steps must lie in [1, timesteps]");
  }
  if (denoiser_widths.empty()) throw ArgumentError("denoiser_widths must not be empty");
  const int div = 1 << (denoiser_widths.size() - 1);
  if (lr().width % div || lr().height % div) {
    throw ArgumentError("LR resolution must be divisible by 2^(levels-1)");
  }
  if (diffusion_steps < 0 || sr_steps < 0) throw ArgumentError("step counts must be >= 0");
  if (diffusion_batch < 1) throw ArgumentError("diffusion_batch must be >= 1");
  if (!(diffusion_lr > 0) || !(sr_lr > 0)) throw ArgumentError("learning rates must be > 0");
  if (!(clip_norm >= 0)) throw ArgumentError("clip_norm must be >= 0");
  if (!(ema_gamma0 >= 0 && ema_gamma0 <= 1)) throw ArgumentError("ema_gamma0 must lie in [0,1]");
  if (!(eta >= 0 && eta <= 1)) throw ArgumentError("eta must lie in [0,1]");
  if (samples < 2) throw ArgumentError("samples must be >= 2");
  if (port < 0 || port > 65535) throw ArgumentError("port out of range");
  if (threads < 1) throw ArgumentError("threads must be >= 1");
  DegradationRecipe r = degradation;
  r.scale = sr_scale;
  r.validate();
  loss.validate();
  SRGeneratorConfig g;
  g.embed_dim = sr_embed_dim;
  g.window = sr_window;
  g.heads = 2;
  g.scale = sr_scale;
  g.validate();
}

Resolution PipelineConfig::lr() const { return {hr.width / sr_scale, hr.height / sr_scale}; }

std::map<std::string, std::string> PipelineConfig::to_map() const {
  return {
      {"corpus_dir", corpus_dir},
      {"out_dir", out_dir},
      {"checkpoint_dir", checkpoint_dir},
      {"seed", std::to_string(seed)},
      {"corpus_size", std::to_string(corpus_size)},
      {"hr_width", std::to_string(hr.width)},
      {"hr_height", std::to_string(hr.height)},
      {"sr_scale", std::to_string(sr_scale)},
      {"timesteps", std::to_string(timesteps)},
      {"schedule_offset", fmt(schedule_offset)},
      {"denoiser_widths", join_ints(denoiser_widths)},
      {"diffusion_steps", std::to_string(diffusion_steps)},
      {"diffusion_batch", std::to_string(diffusion_batch)},
      {"diffusion_lr", fmt(diffusion_lr)},
      {"clip_norm", fmt(clip_norm)},
      {"ema_gamma0", fmt(ema_gamma0)},
      {"eta", fmt(eta)},
      {"inference_steps", std::to_string(inference_steps)},
      {"samples", std::to_string(samples)},
      {"degradation", degradation.serialize()},
      {"multiscale_pool", multiscale_pool ? "true" : "false"},
      {"loss_pixel", fmt(loss.pixel)},
      {"loss_perceptual", fmt(loss.perceptual)},
      {"loss_adversarial", fmt(loss.adversarial)},
      {"sr_steps", std::to_string(sr_steps)},
      {"sr_lr", fmt(sr_lr)},
      {"sr_embed_dim", std::to_string(sr_embed_dim)},
      {"sr_window", std::to_string(sr_window)},
      {"embedder_seed", std::to_string(embedder_seed)},
      {"port", std::to_string(port)},
      {"threads", std::to_string(threads)},
  };
}

PipelineResult run_toy_pipeline(const PipelineConfig& config, const LogFn& log) {
  config.validate();
  const fs::path out(config.out_dir);
  OutputLock lock(config.out_dir);
  const fs::path ckpt_dir = config.checkpoint_dir.empty() ? out / "checkpoints" : fs::path(config.checkpoint_dir);
  fs::create_directories(ckpt_dir);
  const Rng root(config.seed);

  // Real corpus (HR) and its LR copies.
  std::vector<ImageGrid> real_hr;
  if (config.corpus_dir.empty()) {
    real_hr = toy_corpus(config.corpus_size, config.hr, root.derive("corpus").key());
    write_corpus(real_hr, (out / "corpus").string(), "real");
  } else {
    for (const auto& img : load_corpus(config.corpus_dir)) {
      real_hr.push_back(resize_lanczos(img, config.hr).clamp());
    }
    if (real_hr.size() < 2) throw ArgumentError("corpus_dir needs at least 2 images");
  }
  std::vector<ImageGrid> real_lr;
  for (const auto& img : real_hr) real_lr.push_back(resize_lanczos(img, config.lr()).clamp());
  emit(log, "corpus: " + std::to_string(real_hr.size()) + " images");

  // Diffusion training on LR.
  const NoiseSchedule sched = cosine_schedule(config.timesteps, config.schedule_offset);
  DenoiserConfig dcfg;
  dcfg.widths = config.denoiser_widths;
  dcfg.timesteps = config.timesteps;
  dcfg.seed = root.derive("denoiser-init").key();
  ToyDenoiser net(dcfg);
  nn::AdamWConfig opt;
  opt.lr = config.diffusion_lr;
  opt.clip_norm = config.clip_norm;
  DenoiserTrainer trainer(net, opt, EmaSchedule{config.ema_gamma0, std::max(config.diffusion_steps, 1L)});
  Rng train_rng = root.derive("diffusion-train");
  std::vector<TrainStats> trace;
  for (long step = 0; step < config.diffusion_steps; ++step) {
    std::vector<ImageGrid> batch;
    for (int b = 0; b < config.diffusion_batch; ++b) {
      batch.push_back(real_lr[train_rng.below(real_lr.size())]);
    }
    trace.push_back(trainer.train_step(batch, sched, train_rng));
    if ((step + 1) % 250 == 0) {
      emit(log, "diffusion step " + std::to_string(step + 1) + " loss " + fmt(trace.back().loss));
    }
  }
  write_loss_csv(trace, (out / "diffusion_loss.csv").string());
  save_denoiser((ckpt_dir / "denoiser.ckpt").string(), net, &trainer.ema(), &sched);
  const ToyDenoiser ema_net = load_denoiser((ckpt_dir / "denoiser.ckpt").string(), true);

  // Sampling.
  const DenoiserPredictor predictor(ema_net);
  SamplerConfig scfg;
  scfg.eta = config.eta;
  scfg.inference_steps = config.inference_steps;
  std::vector<std::uint64_t> seeds;
  const Rng sample_root = root.derive("samples");
  for (std::size_t i = 0; i < config.samples; ++i) seeds.push_back(sample_root.derive(i).key());
  const std::vector<ImageGrid> synth_lr =
      sample_batch(predictor, sched, scfg, {config.lr(), 1}, seeds, config.threads);
  write_corpus(synth_lr, (out / "samples_lr").string(), "sample");
  emit(log, "sampled " + std::to_string(synth_lr.size()) + " LR images");

  // SR training on degraded pairs of the real corpus.
  SRGeneratorConfig gcfg;
  gcfg.embed_dim = config.sr_embed_dim;
  gcfg.window = config.sr_window;
  gcfg.heads = 2;
  gcfg.n_groups = 1;
  gcfg.blocks_per_group = 1;
  gcfg.scale = config.sr_scale;
  gcfg.seed = root.derive("sr-init").key();
  DegradationRecipe recipe = config.degradation;
  recipe.scale = config.sr_scale;
  recipe.seed = root.derive("degradation").key();
  PairPool pool = config.multiscale_pool ? multiscale_pool(recipe) : PairPool({{recipe, 1.0}});
  if (config.multiscale_pool) {
    for (int s : {2, 3, 4}) {
      if (s != config.sr_scale) gcfg.extra_scales.push_back(s);
    }
  }
  SRGenerator gen(gcfg);
  DiscriminatorConfig discfg;
  discfg.base_channels = 8;
  discfg.depth = 2;
  discfg.seed = root.derive("disc-init").key();
  Discriminator disc(discfg);
  const ToyConvExtractor phi;
  nn::AdamWConfig gopt;
  gopt.lr = config.sr_lr;
  gopt.weight_decay = 0.0;
  gopt.clip_norm = config.clip_norm > 0 ? config.clip_norm : 1.0;
  SrTrainer sr(gen, disc, phi, config.loss, gopt, gopt);
  Rng sr_rng = root.derive("sr-train");
  std::vector<SrStepStats> sr_trace;
  for (long step = 0; step < config.sr_steps; ++step) {
    sr_trace.push_back(sr.step(pool, real_hr, sr_rng, 1));
    if ((step + 1) % 100 == 0) {
      emit(log, "sr step " + std::to_string(step + 1) + " total " + fmt(sr_trace.back().total));
    }
  }
  write_sr_loss_csv(sr_trace, (out / "sr_loss.csv").string());
  save_generator((ckpt_dir / "sr_generator.ckpt").string(), gen);
  save_discriminator((ckpt_dir / "sr_discriminator.ckpt").string(), disc);

  std::vector<ImageGrid> synth_hr;
  for (const auto& lr : synth_lr) synth_hr.push_back(sr_forward(gen, lr, config.sr_scale));
  write_corpus(synth_hr, (out / "samples_sr").string(), "sample");

  // Pure-noise control at the same resolution.
  std::vector<ImageGrid> noise;
  Rng noise_rng = root.derive("noise-control");
  for (std::size_t i = 0; i < config.samples; ++i) {
    ImageGrid g(config.hr.height, config.hr.width);
    for (double& v : g.values()) v = noise_rng.uniform();
    noise.push_back(std::move(g));
  }

  const ToyEmbedder embedder(config.embedder_seed);
  PipelineResult result;
  result.fid_synthetic = fid(embedder, real_hr, synth_hr);
  result.fid_noise = fid(embedder, real_hr, noise);
  result.real_count = real_hr.size();
  result.synthetic_count = synth_hr.size();
  result.embedder_id = embedder.id();

  nlohmann::ordered_json report;
  report["fid_synthetic"] = nlohmann::json::parse(to_json(
      {"fid", result.fid_synthetic, 0.0, synth_hr.size(), embedder.id(), config.embedder_seed}));
  report["fid_noise"] = nlohmann::json::parse(
      to_json({"fid", result.fid_noise, 0.0, noise.size(), embedder.id(), config.embedder_seed}));
  write_file_atomic((out / "fid.json").string(), report.dump(2) + "\n");

  RunRecord rec{"pipeline", config.to_map(), config.seed, {}};
  if (!config.corpus_dir.empty()) rec.inputs.push_back(config.corpus_dir);
  write_run_record(config.out_dir, rec);
  emit(log, "FID real/synthetic " + fmt(result.fid_synthetic) + ", real/noise " + fmt(result.fid_noise));
  return result;
}

}  // namespace radsynth

#include <algorithm>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "radsynth/degradation.hpp"
#include "radsynth/denoiser.hpp"
#include "radsynth/diffusion.hpp"
#include "radsynth/errors.hpp"
#include "radsynth/metrics.hpp"
#include "radsynth/nn/checkpoint.hpp"
#include "radsynth/pipeline.hpp"
#include "radsynth/sr_losses.hpp"
#include "radsynth/sr_model.hpp"
#include "radsynth/study.hpp"
#include "radsynth/study_server.hpp"

using namespace radsynth;
namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

void log_line(const std::string& s) { std::cerr << s << '\n'; }

void require_dir(const std::string& path, const std::string& what) {
  if (path.empty()) throw ArgumentError(what + " is required");
  if (!fs::is_directory(path)) throw ArgumentError(what + " is not a directory: " + path);
}

void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw ArgumentError(what + " is required");
  if (!fs::is_regular_file(path)) throw ArgumentError(what + " not found: " + path);
}


// Effective option values, including those read from a config file.
std::map<std::string, std::string> snapshot(const CLI::App& app) {
  std::map<std::string, std::string> out;
  for (const CLI::Option* opt : app.get_options()) {
    const auto& names = opt->get_lnames();
    if (names.empty() || names.front() == "help" || names.front() == "config") continue;
    std::string value;
    if (opt->count() == 0) {
      value = opt->get_default_str();
    } else {
      for (const auto& r : opt->results()) value += (value.empty() ? "" : ",") + r;
    }
    out[names.front()] = value;
  }
  return out;
}

void finish(const CLI::App& app, const std::string& out_dir, std::uint64_t seed,
            std::vector<std::string> inputs) {
  std::erase_if(inputs, [](const std::string& p) { return p.empty(); });
  write_run_record(out_dir, {app.get_name(), snapshot(app), seed, inputs});
}

std::string stem(const std::string& path) { return fs::path(path).stem().string(); }

void write_text(const std::string& path, const std::string& text) { write_file_atomic(path, text); }

std::vector<ImageGrid> load_resized(const std::string& dir, Resolution res) {
  std::vector<ImageGrid> images = load_corpus(dir);
  if (images.empty()) throw ArgumentError("no PNG images in " + dir);
  if (res.width <= 0 || res.height <= 0) res = images.front().resolution();
  for (auto& img : images) {
    if (img.resolution() != res) img = resize_lanczos(img, res).clamp();
  }
  return images;
}

struct RecipeOptions {
  double poisson = 200.0;
  int jpeg = 75;
  double blur_sigma = 1.0;
  int blur_kernel = 7;
  double noise = 0.02;
  bool multiscale = false;

  void add(CLI::App* app) {
    app->add_option("--poisson", poisson, "photons per unit intensity")->capture_default_str();
    app->add_option("--jpeg", jpeg, "JPEG quality 1..100")->capture_default_str();
    app->add_option("--blur-sigma", blur_sigma)->capture_default_str();
    app->add_option("--blur-kernel", blur_kernel, "odd kernel size")->capture_default_str();
    app->add_option("--noise", noise, "additive Gaussian sigma")->capture_default_str();
    app->add_flag("--multiscale", multiscale, "draw scales 2, 3 and 4 with equal weight");
  }

  [[nodiscard]] DegradationRecipe recipe(int scale, std::uint64_t seed) const {
    DegradationRecipe r;
    r.poisson_scale = poisson;
    r.jpeg_quality = jpeg;
    r.blur_sigma = blur_sigma;
    r.blur_kernel = blur_kernel;
    r.gauss_sigma = noise;
    r.scale = scale;
    r.seed = seed;
    r.validate();
    return r;
  }

  [[nodiscard]] PairPool pool(const DegradationRecipe& r) const {
    return multiscale ? multiscale_pool(r) : PairPool(std::vector<WeightedRecipe>{{r, 1.0}});
  }
};

// ---------------------------------------------------------------- commands

struct MakeCorpus {
  std::string out;
  std::size_t count = 48;
  int width = 128;
  int height = 64;
  std::uint64_t seed = 1;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("make-corpus", "Render a synthetic toy radiograph corpus");
    c->add_option("--out", out)->required();
    c->add_option("--count", count)->capture_default_str();
    c->add_option("--width", width)->capture_default_str();
    c->add_option("--height", height)->capture_default_str();
    c->add_option("--seed", seed)->capture_default_str();
    c->callback([this, c] { run(*c); });
  }

  void run(const CLI::App& app) const {
    if (count < 1) throw ArgumentError("--count must be >= 1");
    OutputLock lock(out);
    write_corpus(toy_corpus(count, {width, height}, Rng(seed).derive("corpus").key()), out, "real");
    finish(app, out, seed, {});
  }
};

struct Prepare {
  PrepareOptions opt;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("prepare", "Crop, grayscale and resize raw scans into HR/LR sets");
    c->add_option("--in", opt.in_dir)->required();
    c->add_option("--out", opt.out_dir)->required();
    c->add_option("--rects", opt.rects_file, "CSV: file,x,y,width,height");
    c->add_option("--hr-width", opt.hr.width)->capture_default_str();
    c->add_option("--hr-height", opt.hr.height)->capture_default_str();
    c->add_option("--lr-width", opt.lr.width)->capture_default_str();
    c->add_option("--lr-height", opt.lr.height)->capture_default_str();
    c->callback([this, c] { run(*c); });
  }

  void run(const CLI::App& app) const {
    require_dir(opt.in_dir, "--in");
    if (!opt.rects_file.empty()) require_file(opt.rects_file, "--rects");
    OutputLock lock(opt.out_dir);
    const PrepareSummary s = prepare_dataset(opt);
    std::cout << "written " << s.written << ", skipped " << s.skipped << ", manifest " << s.manifest << '\n';
    finish(app, opt.out_dir, 0, {opt.in_dir, opt.rects_file});
  }
};

struct TrainDiffusion {
  std::string data, out;
  std::uint64_t seed = 1;
  int timesteps = 200;
  double offset = 0.008;
  std::vector<int> widths{8, 16, 32};
  long steps = 1500;
  int batch = 4;
  double lr = 1e-3;
  double clip = 1.0;
  double ema_gamma0 = 0.995;
  int width = 0, height = 0;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("train-diffusion", "Train the toy denoiser on a directory of images");
    c->add_option("--data", data)->required();
    c->add_option("--out", out)->required();
    c->add_option("--seed", seed)->capture_default_str();
    c->add_option("--timesteps", timesteps)->capture_default_str();
    c->add_option("--schedule-offset", offset)->capture_default_str();
    c->add_option("--widths", widths)->delimiter(',')->capture_default_str();
    c->add_option("--steps", steps)->capture_default_str();
    c->add_option("--batch", batch)->capture_default_str();
    c->add_option("--lr", lr)->capture_default_str();
    c->add_option("--clip", clip, "global gradient norm clip")->capture_default_str();
    c->add_option("--ema-gamma0", ema_gamma0)->capture_default_str();
    c->add_option("--width", width, "training width; 0 keeps the first image's")->capture_default_str();
    c->add_option("--height", height)->capture_default_str();
    c->callback([this, c] { run(*c); });
  }

  void run(const CLI::App& app) const {
    require_dir(data, "--data");
    if (timesteps < 2) throw ArgumentError("--timesteps must be >= 2");
    if (steps < 0 || batch < 1) throw ArgumentError("--steps must be >= 0 and --batch >= 1");
    if (!(lr > 0) || !(clip > 0)) throw ArgumentError("--lr and --clip must be > 0");
    if (!(ema_gamma0 >= 0 && ema_gamma0 <= 1)) throw ArgumentError("--ema-gamma0 must lie in [0,1]");
    const NoiseSchedule sched = cosine_schedule(timesteps, offset);
    DenoiserConfig cfg;
    cfg.widths = widths;
    cfg.timesteps = timesteps;
    cfg.seed = Rng(seed).derive("denoiser-init").key();
    ToyDenoiser net(cfg);
    const std::vector<ImageGrid> images = load_resized(data, {width, height});
    const int div = 1 << (widths.size() - 1);
    if (images.front().width() % div || images.front().height() % div) {
      throw ArgumentError("image size must be divisible by " + std::to_string(div));
    }

    OutputLock lock(out);
    nn::AdamWConfig opt;
    opt.lr = lr;
    opt.clip_norm = clip;
    DenoiserTrainer trainer(net, opt, EmaSchedule{ema_gamma0, std::max(steps, 1L)});
    Rng rng = Rng(seed).derive("diffusion-train");
    std::vector<TrainStats> trace;
    for (long s = 0; s < steps; ++s) {
      std::vector<ImageGrid> b;
      for (int i = 0; i < batch; ++i) b.push_back(images[rng.below(images.size())]);
      trace.push_back(trainer.train_step(b, sched, rng));
      if ((s + 1) % 100 == 0) log_line("step " + std::to_string(s + 1) + " loss " + std::to_string(trace.back().loss));
    }
    write_loss_csv(trace, (fs::path(out) / "diffusion_loss.csv").string());
    save_denoiser((fs::path(out) / "denoiser.ckpt").string(), net, &trainer.ema(), &sched);
    finish(app, out, seed, {data});
  }
};

struct Sample {
  std::string checkpoint, out;
  std::size_t count = 24;
  std::uint64_t seed = 1;
  double eta = 0.0;
  int steps = 50;
  int width = 32, height = 16;
  int threads = 1;
  bool live = false;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("sample", "Draw images from a trained denoiser");
    c->add_option("--checkpoint", checkpoint)->required();
    c->add_option("--out", out)->required();
    c->add_option("--count", count)->capture_default_str();
    c->add_option("--seed", seed)->capture_default_str();
    c->add_option("--eta", eta, "0 deterministic, 1 ancestral")->capture_default_str();
    c->add_option("--steps", steps, "inference steps")->capture_default_str();
    c->add_option("--width", width)->capture_default_str();
    c->add_option("--height", height)->capture_default_str();
    c->add_option("--threads", threads)->capture_default_str();
    c->add_flag("--live", live, "use the live weights instead of the EMA shadow");
    c->callback([this, c] { run(*c); });
  }

  void run(const CLI::App& app) const {
    require_file(checkpoint, "--checkpoint");
    if (!(eta >= 0 && eta <= 1)) throw ArgumentError("--eta must lie in [0,1]");
    if (threads < 1 || count < 1) throw ArgumentError("--threads and --count must be >= 1");
    const nn::Checkpoint ckpt = nn::load_checkpoint(checkpoint);
    const ToyDenoiser net = load_denoiser(checkpoint, !live);
    const auto it = ckpt.meta.find("schedule");
    const NoiseSchedule sched = it != ckpt.meta.end() ? NoiseSchedule::deserialize(it->second)
                                                      : cosine_schedule(net.config().timesteps);
    if (steps < 1 || steps > sched.steps()) throw ArgumentError("--steps must lie in [1, T]");
    const int div = 1 << (net.levels() - 1);
    if (width % div || height % div) throw ArgumentError("size must be divisible by " + std::to_string(div));

    OutputLock lock(out);
    SamplerConfig cfg;
    cfg.eta = eta;
    cfg.inference_steps = steps;
    std::vector<std::uint64_t> seeds;
    const Rng root = Rng(seed).derive("samples");
    for (std::size_t i = 0; i < count; ++i) seeds.push_back(root.derive(i).key());
    const DenoiserPredictor pred(net);
    write_corpus(sample_batch(pred, sched, cfg, {{width, height}, 1}, seeds, threads), out, "sample");
    finish(app, out, seed, {checkpoint});
  }
};

struct Degrade {
  std::string in, out;
  std::uint64_t seed = 1;
  int scale = 4;
  RecipeOptions recipe;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("degrade", "Write degraded HR/LR training pairs");
    c->add_option("--in", in)->required();
    c->add_option("--out", out)->required();
    c->add_option("--seed", seed)->capture_default_str();
    c->add_option("--scale", scale)->capture_default_str();
    recipe.add(c);
    c->callback([this, c] { run(*c); });
  }

  void run(const CLI::App& app) const {
    require_dir(in, "--in");
    const PairPool pool = recipe.pool(recipe.recipe(scale, seed));
    const std::vector<std::string> files = list_png_files(in);
    if (files.empty()) throw ArgumentError("no PNG images in " + in);
    OutputLock lock(out);
    const Rng root = Rng(seed).derive("degrade");
    std::ofstream index(fs::path(out) / "pairs.csv");
    index << "id,scale,recipe\n";
    for (std::size_t i = 0; i < files.size(); ++i) {
      Rng rng = root.derive(i);
      const DegradationRecipe& r = pool.recipes()[pool.pick(rng)].recipe;
      const ImageGrid hr = crop_to_multiple(to_grayscale(load_png(files[i])), r.scale);
      write_pair(degrade_pair(hr, r, rng), out, stem(files[i]));
      std::string text = r.serialize();
      std::replace(text.begin(), text.end(), '\n', ';');
      index << stem(files[i]) << ',' << r.scale << ",\"" << text << "\"\n";
    }
    index.close();
    finish(app, out, seed, {in});
  }
};

struct TrainSr {
  std::string data, out;
  std::uint64_t seed = 1;
  int scale = 4;
  long steps = 300;
  double lr = 2e-3;
  double clip = 1.0;
  int batch = 1;
  SRGeneratorConfig gen;
  int disc_base = 8, disc_depth = 2;
  LossWeights weights;
  RecipeOptions recipe;

  TrainSr() {
    gen.embed_dim = 8;
    gen.n_groups = 1;
    gen.blocks_per_group = 1;
  }

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("train-sr", "Train the super-resolution GAN on degraded pairs of HR images");
    c->add_option("--data", data, "directory of HR images")->required();
    c->add_option("--out", out)->required();
    c->add_option("--seed", seed)->capture_default_str();
    c->add_option("--scale", scale)->capture_default_str();
    c->add_option("--steps", steps)->capture_default_str();
    c->add_option("--lr", lr)->capture_default_str();
    c->add_option("--clip", clip)->capture_default_str();
    c->add_option("--batch", batch)->capture_default_str();
    c->add_option("--embed-dim", gen.embed_dim)->capture_default_str();
    c->add_option("--window", gen.window)->capture_default_str();
    c->add_option("--heads", gen.heads)->capture_default_str();
    c->add_option("--groups", gen.n_groups)->capture_default_str();
    c->add_option("--blocks", gen.blocks_per_group)->capture_default_str();
    c->add_option("--overlap-ratio", gen.overlap_ratio)->capture_default_str();
    c->add_option("--disc-base", disc_base)->capture_default_str();
    c->add_option("--disc-depth", disc_depth)->capture_default_str();
    c->add_option("--w-pixel", weights.pixel)->capture_default_str();
    c->add_option("--w-perceptual", weights.perceptual)->capture_default_str();
    c->add_option("--w-adversarial", weights.adversarial)->capture_default_str();
    recipe.add(c);
    c->callback([this, c] { run(*c); });
  }

  void run(const CLI::App& app) const {
    require_dir(data, "--data");
    if (steps < 0 || batch < 1) throw ArgumentError("--steps must be >= 0 and --batch >= 1");
    if (!(lr > 0)) throw ArgumentError("--lr must be > 0");
    weights.validate();
    const Rng root(seed);
    const DegradationRecipe base = recipe.recipe(scale, root.derive("degradation").key());
    const PairPool pool = recipe.pool(base);
    SRGeneratorConfig g = gen;
    g.scale = scale;
    g.seed = root.derive("sr-init").key();
    if (recipe.multiscale) {
      for (int s : {2, 3, 4}) {
        if (s != scale) g.extra_scales.push_back(s);
      }
    }
    g.validate();
    DiscriminatorConfig dc;
    dc.base_channels = disc_base;
    dc.depth = disc_depth;
    dc.seed = root.derive("disc-init").key();
    const std::vector<ImageGrid> hr = load_resized(data, {0, 0});

    OutputLock lock(out);
    SRGenerator generator(g);
    Discriminator disc(dc);
    const ToyConvExtractor phi;
    nn::AdamWConfig opt;
    opt.lr = lr;
    opt.weight_decay = 0.0;
    opt.clip_norm = clip;
    SrTrainer trainer(generator, disc, phi, weights, opt, opt);
    Rng rng = root.derive("sr-train");
    std::vector<SrStepStats> trace;
    for (long s = 0; s < steps; ++s) {
      trace.push_back(trainer.step(pool, hr, rng, batch));
      if ((s + 1) % 50 == 0) log_line("step " + std::to_string(s + 1) + " total " + std::to_string(trace.back().total));
    }
    write_sr_loss_csv(trace, (fs::path(out) / "sr_loss.csv").string());
    save_generator((fs::path(out) / "sr_generator.ckpt").string(), generator);
    save_discriminator((fs::path(out) / "sr_discriminator.ckpt").string(), disc);
    finish(app, out, seed, {data});
  }
};

struct Upscale {
  std::string checkpoint, in, out;
  int scale = 0;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("upscale", "Super-resolve every PNG in a directory");
    c->add_option("--checkpoint", checkpoint)->required();
    c->add_option("--in", in)->required();
    c->add_option("--out", out)->required();
    c->add_option("--scale", scale, "0 uses the generator's primary scale")->capture_default_str();
    c->callback([this, c] { run(*c); });
  }

  void run(const CLI::App& app) const {
    require_file(checkpoint, "--checkpoint");
    require_dir(in, "--in");
    const SRGenerator gen = load_generator(checkpoint);
    const std::vector<std::string> files = list_png_files(in);
    if (files.empty()) throw ArgumentError("no PNG images in " + in);
    OutputLock lock(out);
    for (const auto& f : files) {
      save_png(sr_forward(gen, to_grayscale(load_png(f)), scale),
               (fs::path(out) / fs::path(f).filename()).string(), BitDepth::k16);
    }
    finish(app, out, 0, {checkpoint, in});
  }
};

struct EvalFid {
  std::string a, b, out;
  std::uint64_t embedder_seed = 0;

  void add(CLI::App* eval) {
    auto* c = eval->add_subcommand("fid", "Frechet distance between two image sets");
    c->add_option("--a", a, "reference set")->required();
    c->add_option("--b", b, "compared set")->required();
    c->add_option("--out", out)->required();
    c->add_option("--embedder-seed", embedder_seed)->capture_default_str();
    c->callback([this, c] { run(*c); });
  }

  void run(const CLI::App& app) const {
    require_dir(a, "--a");
    require_dir(b, "--b");
    const ToyEmbedder embedder(embedder_seed);
    const auto ia = load_corpus(a), ib = load_corpus(b);
    OutputLock lock(out);
    const double value = fid(embedder, ia, ib);
    const std::string report = to_json({"fid", value, 0.0, ib.size(), embedder.id(), embedder_seed});
    write_text((fs::path(out) / "fid.json").string(), report + "\n");
    std::cout << report << '\n';
    finish(app, out, embedder_seed, {a, b});
  }
};

struct EvalIs {
  std::string in, out;
  int splits = 10;
  int classes = 10;
  std::uint64_t embedder_seed = 0, classifier_seed = 0;
  double temperature = 1.0;

  void add(CLI::App* eval) {
    auto* c = eval->add_subcommand("is", "Inception-style score with the toy classifier");
    c->add_option("--in", in)->required();
    c->add_option("--out", out)->required();
    c->add_option("--splits", splits)->capture_default_str();
    c->add_option("--classes", classes)->capture_default_str();
    c->add_option("--embedder-seed", embedder_seed)->capture_default_str();
    c->add_option("--classifier-seed", classifier_seed)->capture_default_str();
    c->add_option("--temperature", temperature)->capture_default_str();
    c->callback([this, c] { run(*c); });
  }

  void run(const CLI::App& app) const {
    require_dir(in, "--in");
    const ToyEmbedder embedder(embedder_seed);
    const ToyClassifier clf(embedder, classes, classifier_seed, temperature);
    const auto images = load_corpus(in);
    OutputLock lock(out);
    std::vector<std::vector<double>> probs;
    for (const auto& img : images) probs.push_back(clf.probabilities(img));
    const InceptionScore s = inception_score(probs, splits);
    const std::string report = to_json({"is", s.mean, s.std, images.size(), embedder.id(), classifier_seed});
    write_text((fs::path(out) / "is.json").string(), report + "\n");
    std::cout << report << '\n';
    finish(app, out, classifier_seed, {in});
  }
};

struct EvalTsne {
  std::string a, b, out;
  std::string label_a = "real", label_b = "synthetic";
  TsneConfig cfg;
  std::uint64_t embedder_seed = 0;

  void add(CLI::App* eval) {
    auto* c = eval->add_subcommand("tsne", "2-D t-SNE projection of two image sets");
    c->add_option("--a", a)->required();
    c->add_option("--b", b)->required();
    c->add_option("--out", out)->required();
    c->add_option("--label-a", label_a)->capture_default_str();
    c->add_option("--label-b", label_b)->capture_default_str();
    c->add_option("--perplexity", cfg.perplexity)->capture_default_str();
    c->add_option("--iterations", cfg.iterations)->capture_default_str();
    c->add_option("--learning-rate", cfg.learning_rate, "<= 0 picks one from n")->capture_default_str();
    c->add_option("--seed", cfg.seed)->capture_default_str();
    c->add_option("--embedder-seed", embedder_seed)->capture_default_str();
    c->callback([this, c] { run(*c); });
  }

  void run(const CLI::App& app) const {
    require_dir(a, "--a");
    require_dir(b, "--b");
    const ToyEmbedder embedder(embedder_seed);
    auto fa = embed_all(embedder, load_corpus(a));
    const auto fb = embed_all(embedder, load_corpus(b));
    const std::size_t na = fa.size();
    std::vector<std::string> labels(na, label_a);
    labels.insert(labels.end(), fb.size(), label_b);
    fa.insert(fa.end(), fb.begin(), fb.end());
    OutputLock lock(out);
    const std::vector<Point2> pts = tsne_2d(fa, cfg);
    write_points_csv(pts, labels, (fs::path(out) / "tsne_points.csv").string());
    const std::vector<Point2> pa(pts.begin(), pts.begin() + static_cast<std::ptrdiff_t>(na));
    const std::vector<Point2> pb(pts.begin() + static_cast<std::ptrdiff_t>(na), pts.end());
    ojson j;
    j["metric"] = "tsne_centroid_distance";
    j["value"] = centroid_distance(pa, pb);
    j["n"] = {{label_a, pa.size()}, {label_b, pb.size()}};
    j["embedder_id"] = embedder.id();
    j["seed"] = cfg.seed;
    write_text((fs::path(out) / "tsne.json").string(), j.dump(2) + "\n");
    std::cout << j.dump() << '\n';
    finish(app, out, cfg.seed, {a, b});
  }
};

// "score,label" rows; label is fake/real or 1/0.
std::vector<ScoredLabel> read_scores(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  std::vector<ScoredLabel> items;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#' || (lineno == 1 && line.rfind("score", 0) == 0)) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ArgumentError(path + ":" + std::to_string(lineno) + ": expected score,label");
    ScoredLabel s;
    try {
      s.score = std::stod(line.substr(0, comma));
    } catch (const std::exception&) {
      throw ArgumentError(path + ":" + std::to_string(lineno) + ": bad score");
    }
    std::string label = line.substr(comma + 1);
    while (!label.empty() && std::isspace(static_cast<unsigned char>(label.back()))) label.pop_back();
    if (label == "fake" || label == "1") {
      s.fake = true;
    } else if (label != "real" && label != "0") {
      throw ArgumentError(path + ":" + std::to_string(lineno) + ": label must be fake/real or 1/0");
    }
    items.push_back(s);
  }
  return items;
}

struct EvalRoc {
  std::string scores, out;

  void add(CLI::App* eval) {
    auto* c = eval->add_subcommand("roc", "ROC and precision-recall curves from scored labels");
    c->add_option("--scores", scores, "CSV score,label")->required();
    c->add_option("--out", out)->required();
    c->callback([this, c] { run(*c); });
  }

  void run(const CLI::App& app) const {
    require_file(scores, "--scores");
    const auto items = read_scores(scores);
    OutputLock lock(out);
    const RocCurve roc = roc_curve(items);
    const PrCurve pr = pr_curve(items);
    write_roc_csv(roc.points, (fs::path(out) / "roc.csv").string());
    write_pr_csv(pr.points, (fs::path(out) / "pr.csv").string());
    ojson j;
    j["auc"] = roc.auc;
    j["average_precision"] = pr.average_precision;
    j["n"] = items.size();
    write_text((fs::path(out) / "roc.json").string(), j.dump(2) + "\n");
    std::cout << j.dump() << '\n';
    finish(app, out, 0, {scores});
  }
};

volatile std::sig_atomic_t g_stop = 0;
extern "C" void on_signal(int) { g_stop = 1; }

struct StudyServe {
  StudyServerConfig cfg;

  void add(CLI::App* study) {
    auto* c = study->add_subcommand("serve", "Run the timed real-vs-fake observer study service");
    c->add_option("--real", cfg.real_dir)->required();
    c->add_option("--fake", cfg.fake_dir)->required();
    c->add_option("--store", cfg.store_dir, "session JSON directory")->required();
    c->add_option("--static", cfg.static_dir, "UI bundle served at /");
    c->add_option("--host", cfg.host)->capture_default_str();
    c->add_option("--port", cfg.port)->capture_default_str();
    c->add_option("--n-each", cfg.n_each)->capture_default_str();
    c->add_option("--deadline", cfg.deadline_s, "seconds per image")->capture_default_str();
    c->add_option("--grace", cfg.grace_s)->capture_default_str();
    c->add_option("--salt", cfg.id_salt, "image id salt")->capture_default_str();
    c->callback([this, c] { run(*c); });
  }

  void run(const CLI::App& app) const {
    require_dir(cfg.real_dir, "--real");
    require_dir(cfg.fake_dir, "--fake");
    if (!cfg.static_dir.empty()) require_dir(cfg.static_dir, "--static");
    if (cfg.port < 0 || cfg.port > 65535) throw ArgumentError("--port out of range");
    OutputLock lock(cfg.store_dir);
    finish(app, cfg.store_dir, cfg.id_salt, {cfg.real_dir, cfg.fake_dir});
    StudyServer server(cfg);
    const int port = server.start();
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cout << "listening on http://" << cfg.host << ':' << port << std::endl;
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    server.stop();
  }
};

struct StudyScore {
  std::string store, out;
  int grid = 101;

  void add(CLI::App* study) {
    auto* c = study->add_subcommand("score", "Score completed sessions and average their ROC curves");
    c->add_option("--store", store)->required();
    c->add_option("--out", out)->required();
    c->add_option("--grid", grid, "FPR grid points for the averaged ROC")->capture_default_str();
    c->callback([this, c] { run(*c); });
  }

  void run(const CLI::App& app) const {
    require_dir(store, "--store");
    if (grid < 2) throw ArgumentError("--grid must be >= 2");
    SessionStore sessions(store);
    OutputLock lock(out);
    ojson reports = ojson::array();
    std::vector<RocCurve> curves;
    for (const auto& id : sessions.ids()) {
      sessions.with_session(id, [&](StudySession& s) {
        ojson r;
        r["session_id"] = id;
        r["observer"] = s.observer();
        if (s.state() != SessionState::complete) {
          r["status"] = "incomplete";
          r["answered"] = s.responses().size();
        } else {
          r["status"] = "complete";
          r["report"] = ojson::parse(to_json(s.score()));
          curves.push_back(s.roc());
          r["auc"] = curves.back().auc;
        }
        reports.push_back(r);
      });
    }
    write_text((fs::path(out) / "reports.json").string(), reports.dump(2) + "\n");
    if (!curves.empty()) {
      std::vector<double> fpr;
      for (int i = 0; i < grid; ++i) fpr.push_back(static_cast<double>(i) / (grid - 1));
      write_roc_csv(average_roc(curves, fpr), (fs::path(out) / "average_roc.csv").string());
    }
    std::cout << curves.size() << " complete of " << reports.size() << " sessions\n";
    finish(app, out, 0, {store});
  }
};

struct Pipeline {
  PipelineConfig cfg;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("pipeline", "Toy end-to-end run: corpus, diffusion, SR, FID");
    c->add_option("--out", cfg.out_dir)->required();
    c->add_option("--corpus", cfg.corpus_dir, "real HR images; empty renders a toy corpus");
    c->add_option("--checkpoints", cfg.checkpoint_dir);
    c->add_option("--seed", cfg.seed)->capture_default_str();
    c->add_option("--corpus-size", cfg.corpus_size)->capture_default_str();
    c->add_option("--hr-width", cfg.hr.width)->capture_default_str();
    c->add_option("--hr-height", cfg.hr.height)->capture_default_str();
    c->add_option("--sr-scale", cfg.sr_scale)->capture_default_str();
    c->add_option("--timesteps", cfg.timesteps)->capture_default_str();
    c->add_option("--schedule-offset", cfg.schedule_offset)->capture_default_str();
    c->add_option("--widths", cfg.denoiser_widths)->delimiter(',')->capture_default_str();
    c->add_option("--diffusion-steps", cfg.diffusion_steps)->capture_default_str();
    c->add_option("--diffusion-batch", cfg.diffusion_batch)->capture_default_str();
    c->add_option("--diffusion-lr", cfg.diffusion_lr)->capture_default_str();
    c->add_option("--clip", cfg.clip_norm)->capture_default_str();
    c->add_option("--ema-gamma0", cfg.ema_gamma0)->capture_default_str();
    c->add_option("--eta", cfg.eta)->capture_default_str();
    c->add_option("--inference-steps", cfg.inference_steps)->capture_default_str();
    c->add_option("--samples", cfg.samples)->capture_default_str();
    c->add_option("--poisson", cfg.degradation.poisson_scale)->capture_default_str();
    c->add_option("--jpeg", cfg.degradation.jpeg_quality)->capture_default_str();
    c->add_option("--blur-sigma", cfg.degradation.blur_sigma)->capture_default_str();
    c->add_option("--blur-kernel", cfg.degradation.blur_kernel)->capture_default_str();
    c->add_option("--noise", cfg.degradation.gauss_sigma)->capture_default_str();
    c->add_flag("--multiscale", cfg.multiscale_pool);
    c->add_option("--w-pixel", cfg.loss.pixel)->capture_default_str();
    c->add_option("--w-perceptual", cfg.loss.perceptual)->capture_default_str();
    c->add_option("--w-adversarial", cfg.loss.adversarial)->capture_default_str();
    c->add_option("--sr-steps", cfg.sr_steps)->capture_default_str();
    c->add_option("--sr-lr", cfg.sr_lr)->capture_default_str();
    c->add_option("--sr-embed-dim", cfg.sr_embed_dim)->capture_default_str();
    c->add_option("--sr-window", cfg.sr_window)->capture_default_str();
    c->add_option("--embedder-seed", cfg.embedder_seed)->capture_default_str();
    c->add_option("--threads", cfg.threads)->capture_default_str();
    c->callback([this] { run(); });
  }

  void run() const {
    const PipelineResult r = run_toy_pipeline(cfg, log_line);
    std::cout << "fid_synthetic " << r.fid_synthetic << "\nfid_noise " << r.fid_noise << '\n';
  }
};

std::string g_config_path;

void add_config_file(CLI::App* app) {
  app->add_option("--config", g_config_path, "flat 'key = value' file; command-line flags take precedence");
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

// Appends --key=value for every config-file key not already given as a flag.
std::vector<std::string> expand_config(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::string file;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) file = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) file = args[i].substr(9);
  }
  if (file.empty()) return args;
  std::ifstream in(file);
  if (!in) throw ArgumentError("cannot read config file " + file);
  const std::vector<std::string> given = args;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ArgumentError(file + ":" + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const std::string flag = "--" + key;
    const bool overridden = std::any_of(given.begin(), given.end(), [&](const std::string& a) {
      return a == flag || a.rfind(flag + "=", 0) == 0;
    });
    if (overridden) continue;
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      args.push_back(flag + "=" + value.substr(1, value.size() - 2));
      continue;
    }
    // Unquoted lists ("8 16 32" or "8, 16, 32") become one argument per item.
    std::string spaced = value;
    std::replace(spaced.begin(), spaced.end(), ',', ' ');
    std::istringstream items(spaced);
    std::vector<std::string> tokens{std::istream_iterator<std::string>(items), {}};
    if (tokens.size() <= 1) {
      args.push_back(flag + "=" + value);
    } else {
      args.push_back(flag);
      args.insert(args.end(), tokens.begin(), tokens.end());
    }
  }
  return args;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app("radsynth: synthetic radiograph generation, super-resolution and evaluation");
  app.require_subcommand(1);

  MakeCorpus make_corpus;
  Prepare prepare;
  TrainDiffusion train_diffusion;
  Sample sample_cmd;
  Degrade degrade;
  TrainSr train_sr;
  Upscale upscale;
  EvalFid eval_fid;
  EvalIs eval_is;
  EvalTsne eval_tsne;
  EvalRoc eval_roc;
  StudyServe study_serve;
  StudyScore study_score;
  Pipeline pipeline;

  make_corpus.add(app);
  prepare.add(app);
  train_diffusion.add(app);
  sample_cmd.add(app);
  degrade.add(app);
  train_sr.add(app);
  upscale.add(app);
  auto* eval = app.add_subcommand("eval", "Metrics");
  eval->require_subcommand(1);
  eval_fid.add(eval);
  eval_is.add(eval);
  eval_tsne.add(eval);
  eval_roc.add(eval);
  auto* study = app.add_subcommand("study", "Observer study");
  study->require_subcommand(1);
  study_serve.add(study);
  study_score.add(study);
  pipeline.add(app);

  for (CLI::App* sub : app.get_subcommands({})) {
    if (sub->get_name() == "eval" || sub->get_name() == "study") {
      for (CLI::App* leaf : sub->get_subcommands({})) add_config_file(leaf);
    } else {
      add_config_file(sub);
    }
  }

  try {
    std::vector<std::string> args = expand_config(argc, argv);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  } catch (const ArgumentError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const StateError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const DecodeError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

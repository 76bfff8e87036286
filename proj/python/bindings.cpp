#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "radsynth/degradation.hpp"
#include "radsynth/denoiser.hpp"
#include "radsynth/diffusion.hpp"
#include "radsynth/errors.hpp"
#include "radsynth/metrics.hpp"
#include "radsynth/nn/checkpoint.hpp"
#include "radsynth/pipeline.hpp"
#include "radsynth/schedules.hpp"
#include "radsynth/sr_losses.hpp"
#include "radsynth/sr_model.hpp"
#include "radsynth/study.hpp"

namespace py = pybind11;
using namespace radsynth;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

// (H, W) for one channel, (H, W, C) otherwise.
ImageGrid to_grid(const Array& a) {
  if (a.ndim() != 2 && a.ndim() != 3) throw ArgumentError("image must be a 2-D or 3-D array");
  const int h = static_cast<int>(a.shape(0));
  const int w = static_cast<int>(a.shape(1));
  const int c = a.ndim() == 3 ? static_cast<int>(a.shape(2)) : 1;
  return ImageGrid(h, w, c, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const ImageGrid& g) {
  std::vector<py::ssize_t> shape{g.height(), g.width()};
  if (g.channels() != 1) shape.push_back(g.channels());
  Array out(shape);
  std::copy(g.data().begin(), g.data().end(), out.mutable_data());
  return out;
}

std::vector<ImageGrid> to_grids(const std::vector<Array>& arrays) {
  std::vector<ImageGrid> out;
  out.reserve(arrays.size());
  for (const auto& a : arrays) out.push_back(to_grid(a));
  return out;
}

std::vector<Array> to_arrays(const std::vector<ImageGrid>& grids) {
  std::vector<Array> out;
  out.reserve(grids.size());
  for (const auto& g : grids) out.push_back(to_array(g));
  return out;
}

DegradationRecipe recipe_from(const py::dict& d) {
  DegradationRecipe r;
  for (const auto& [k, v] : d) {
    const auto key = k.cast<std::string>();
    if (key == "poisson_scale") r.poisson_scale = v.cast<double>();
    else if (key == "jpeg_quality") r.jpeg_quality = v.cast<int>();
    else if (key == "blur_sigma") r.blur_sigma = v.cast<double>();
    else if (key == "blur_kernel") r.blur_kernel = v.cast<int>();
    else if (key == "gauss_sigma") r.gauss_sigma = v.cast<double>();
    else if (key == "scale") r.scale = v.cast<int>();
    else if (key == "seed") r.seed = v.cast<std::uint64_t>();
    else throw ArgumentError("unknown recipe key: " + key);
  }
  r.validate();
  return r;
}

std::vector<ScoredLabel> scored(const std::vector<double>& scores, const std::vector<bool>& fake) {
  if (scores.size() != fake.size()) throw ArgumentError("scores and labels differ in length");
  std::vector<ScoredLabel> out;
  for (std::size_t i = 0; i < scores.size(); ++i) out.push_back({scores[i], fake[i]});
  return out;
}

py::dict report_dict(const SessionReport& r) {
  py::dict d;
  d["TP"] = r.tp;
  d["TN"] = r.tn;
  d["FP"] = r.fp;
  d["FN"] = r.fn;
  d["U"] = r.unsure;
  d["precision"] = r.precision;
  d["recall"] = r.recall;
  d["accuracy"] = r.accuracy;
  return d;
}

PipelineConfig pipeline_config(const std::string& out_dir, const py::kwargs& kw) {
  PipelineConfig c;
  c.out_dir = out_dir;
  for (const auto& [k, v] : kw) {
    const auto key = k.cast<std::string>();
    if (key == "seed") c.seed = v.cast<std::uint64_t>();
    else if (key == "corpus_dir") c.corpus_dir = v.cast<std::string>();
    else if (key == "corpus_size") c.corpus_size = v.cast<std::size_t>();
    else if (key == "hr_width") c.hr.width = v.cast<int>();
    else if (key == "hr_height") c.hr.height = v.cast<int>();
    else if (key == "sr_scale") c.sr_scale = v.cast<int>();
    else if (key == "timesteps") c.timesteps = v.cast<int>();
    else if (key == "denoiser_widths") c.denoiser_widths = v.cast<std::vector<int>>();
    else if (key == "diffusion_steps") c.diffusion_steps = v.cast<long>();
    else if (key == "diffusion_batch") c.diffusion_batch = v.cast<int>();
    else if (key == "inference_steps") c.inference_steps = v.cast<int>();
    else if (key == "samples") c.samples = v.cast<std::size_t>();
    else if (key == "sr_steps") c.sr_steps = v.cast<long>();
    else if (key == "eta") c.eta = v.cast<double>();
    else if (key == "threads") c.threads = v.cast<int>();
    else if (key == "embedder_seed") c.embedder_seed = v.cast<std::uint64_t>();
    else throw ArgumentError("unknown pipeline option: " + key);
  }
  return c;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Toy radiograph diffusion, super-resolution and evaluation core";

  py::register_exception<ArgumentError>(m, "ArgumentError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<DecodeError>(m, "DecodeError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<StateError>(m, "StateError", PyExc_RuntimeError);
  py::register_exception<SequenceError>(m, "SequenceError", PyExc_RuntimeError);
  py::register_exception<ConflictError>(m, "ConflictError", PyExc_RuntimeError);

  // Images.
  m.def("load_png", [](const std::string& path) { return to_array(load_png(path)); }, py::arg("path"));
  m.def(
      "save_png",
      [](const Array& img, const std::string& path, int bits) {
        save_png(to_grid(img), path, bits == 16 ? BitDepth::k16 : BitDepth::k8);
      },
      py::arg("image"), py::arg("path"), py::arg("bits") = 8);
  m.def(
      "resize_lanczos",
      [](const Array& img, int width, int height) { return to_array(resize_lanczos(to_grid(img), {width, height})); },
      py::arg("image"), py::arg("width"), py::arg("height"));
  m.def(
      "toy_corpus",
      [](std::size_t n, int width, int height, std::uint64_t seed) {
        return to_arrays(toy_corpus(n, {width, height}, seed));
      },
      py::arg("n"), py::arg("width"), py::arg("height"), py::arg("seed") = 0);

  // Schedules and diffusion.
  py::class_<NoiseSchedule>(m, "NoiseSchedule")
      .def_property_readonly("steps", &NoiseSchedule::steps)
      .def("beta", &NoiseSchedule::beta, py::arg("t"))
      .def("alpha_bar", &NoiseSchedule::alpha_bar, py::arg("t"))
      .def_property_readonly("betas", &NoiseSchedule::betas);
  m.def("cosine_schedule", [](int steps, double offset) { return cosine_schedule(steps, offset); },
        py::arg("steps"), py::arg("offset") = 0.008);
  m.def("linear_schedule", [](int steps, double b0, double b1) { return linear_schedule(steps, b0, b1); },
        py::arg("steps"), py::arg("beta_start") = 1e-4, py::arg("beta_end") = 0.02);
  m.def(
      "forward_noise",
      [](const Array& x0, int t, const NoiseSchedule& sched, std::uint64_t seed) {
        Rng rng(seed);
        const NoisedSample s = forward_noise(to_grid(x0), t, sched, rng);
        return py::make_tuple(to_array(s.x_t), to_array(s.eps));
      },
      py::arg("x0"), py::arg("t"), py::arg("schedule"), py::arg("seed") = 0,
      "Returns (x_t in the model domain, eps).");
  m.def(
      "sample_gaussian_oracle",
      [](const NoiseSchedule& sched, double mean, double var, int width, int height, int count,
         int inference_steps, double eta, std::uint64_t seed) {
        const ImageGrid mu(height, width, 1, mean);
        const AnalyticGaussianPredictor pred(sched, mu, var);
        SamplerConfig cfg;
        cfg.eta = eta;
        cfg.inference_steps = inference_steps;
        cfg.clip_denoised = false;
        std::vector<ImageGrid> out;
        for (int i = 0; i < count; ++i) {
          Rng rng = Rng(seed).derive(static_cast<std::uint64_t>(i));
          out.push_back(sample_model_domain(pred, sched, cfg, {{width, height}, 1}, rng));
        }
        return to_arrays(out);
      },
      py::arg("schedule"), py::arg("mean"), py::arg("var"), py::arg("width"), py::arg("height"),
      py::arg("count"), py::arg("inference_steps"), py::arg("eta") = 0.0, py::arg("seed") = 0,
      "Model-domain samples from the exact predictor for N(mean, var) data.");
  m.def(
      "sample_checkpoint",
      [](const std::string& path, int count, int width, int height, int inference_steps, double eta,
         std::uint64_t seed) {
        const nn::Checkpoint ckpt = nn::load_checkpoint(path);
        const ToyDenoiser net = load_denoiser(path, true);
        const auto it = ckpt.meta.find("schedule");
        const NoiseSchedule sched = it != ckpt.meta.end() ? NoiseSchedule::deserialize(it->second)
                                                          : cosine_schedule(net.config().timesteps);
        SamplerConfig cfg;
        cfg.eta = eta;
        cfg.inference_steps = inference_steps;
        std::vector<std::uint64_t> seeds;
        const Rng root = Rng(seed).derive("samples");
        for (int i = 0; i < count; ++i) seeds.push_back(root.derive(static_cast<std::uint64_t>(i)).key());
        std::vector<ImageGrid> images;
        {
          py::gil_scoped_release release;
          images = sample_batch(DenoiserPredictor(net), sched, cfg, {{width, height}, 1}, seeds);
        }
        return to_arrays(images);
      },
      py::arg("checkpoint"), py::arg("count"), py::arg("width"), py::arg("height"),
      py::arg("inference_steps") = 50, py::arg("eta") = 0.0, py::arg("seed") = 1);

  // Degradation.
  m.def("jpeg_compress", [](const Array& img, int q) { return to_array(jpeg_compress(to_grid(img), q)); },
        py::arg("image"), py::arg("quality"));
  m.def(
      "gaussian_blur",
      [](const Array& img, double sigma, int kernel) { return to_array(gaussian_blur(to_grid(img), sigma, kernel)); },
      py::arg("image"), py::arg("sigma"), py::arg("kernel"));
  m.def(
      "poisson_noise",
      [](const Array& img, double scale, std::uint64_t seed) {
        Rng rng(seed);
        return to_array(poisson_noise(to_grid(img), scale, rng));
      },
      py::arg("image"), py::arg("scale"), py::arg("seed") = 0);
  m.def(
      "degrade_pair",
      [](const Array& hr, const py::dict& recipe) {
        const DegradedPair p = degrade_pair(to_grid(hr), recipe_from(recipe));
        return py::make_tuple(to_array(p.hr), to_array(p.lr));
      },
      py::arg("hr"), py::arg("recipe") = py::dict(),
      "recipe keys: poisson_scale, jpeg_quality, blur_sigma, blur_kernel, gauss_sigma, scale, seed.");

  // Super-resolution.
  m.def(
      "upscale",
      [](const std::string& checkpoint, const Array& lr, int scale) {
        return to_array(sr_forward(load_generator(checkpoint), to_grid(lr), scale));
      },
      py::arg("checkpoint"), py::arg("lr"), py::arg("scale") = 0);
  m.def("psnr", [](const Array& a, const Array& b) { return psnr(to_grid(a), to_grid(b)); }, py::arg("a"),
        py::arg("b"));

  // Metrics.
  m.def(
      "fid",
      [](const std::vector<Array>& a, const std::vector<Array>& b, std::uint64_t embedder_seed) {
        return fid(ToyEmbedder(embedder_seed), to_grids(a), to_grids(b));
      },
      py::arg("a"), py::arg("b"), py::arg("embedder_seed") = 0);
  m.def(
      "frechet_distance",
      [](const std::vector<FeatureVector>& a, const std::vector<FeatureVector>& b) {
        return frechet_distance(fit_gaussian(a), fit_gaussian(b));
      },
      py::arg("features_a"), py::arg("features_b"));
  m.def(
      "embed",
      [](const std::vector<Array>& images, std::uint64_t seed) {
        return embed_all(ToyEmbedder(seed), to_grids(images));
      },
      py::arg("images"), py::arg("embedder_seed") = 0);
  m.def(
      "inception_score",
      [](const std::vector<std::vector<double>>& probs, int splits) {
        const InceptionScore s = inception_score(probs, splits);
        return py::make_tuple(s.mean, s.std);
      },
      py::arg("probs"), py::arg("splits") = 10);
  m.def(
      "tsne_2d",
      [](const std::vector<FeatureVector>& features, double perplexity, int iterations, std::uint64_t seed) {
        TsneConfig cfg;
        cfg.perplexity = perplexity;
        cfg.iterations = iterations;
        cfg.seed = seed;
        return tsne_2d(features, cfg);
      },
      py::arg("features"), py::arg("perplexity") = 30.0, py::arg("iterations") = 1000, py::arg("seed") = 0);
  m.def(
      "roc_curve",
      [](const std::vector<double>& scores, const std::vector<bool>& fake) {
        const RocCurve c = roc_curve(scored(scores, fake));
        std::vector<double> fpr, tpr, thr;
        for (const auto& p : c.points) {
          fpr.push_back(p.fpr);
          tpr.push_back(p.tpr);
          thr.push_back(p.threshold);
        }
        return py::make_tuple(fpr, tpr, thr, c.auc);
      },
      py::arg("scores"), py::arg("fake"), "Returns (fpr, tpr, thresholds, auc); fake is the positive class.");
  m.def(
      "average_precision",
      [](const std::vector<double>& scores, const std::vector<bool>& fake) {
        return pr_curve(scored(scores, fake)).average_precision;
      },
      py::arg("scores"), py::arg("fake"));

  // Observer study scoring.
  m.def(
      "score_responses",
      [](const std::vector<bool>& fake, const std::vector<double>& values) {
        std::vector<Truth> truths;
        for (bool f : fake) truths.push_back(f ? Truth::fake : Truth::real);
        return report_dict(score_responses(truths, values));
      },
      py::arg("fake"), py::arg("values"));
  m.def(
      "report_from_counts",
      [](double tp, double tn, double fp, double fn) { return report_dict(report_from_counts(tp, tn, fp, fn)); },
      py::arg("tp"), py::arg("tn"), py::arg("fp"), py::arg("fn"));

  // End-to-end.
  m.def(
      "run_toy_pipeline",
      [](const std::string& out_dir, const py::kwargs& kw) {
        const PipelineConfig cfg = pipeline_config(out_dir, kw);
        PipelineResult r;
        {
          py::gil_scoped_release release;
          r = run_toy_pipeline(cfg);
        }
        py::dict d;
        d["fid_synthetic"] = r.fid_synthetic;
        d["fid_noise"] = r.fid_noise;
        d["real_count"] = r.real_count;
        d["synthetic_count"] = r.synthetic_count;
        d["embedder_id"] = r.embedder_id;
        return d;
      },
      py::arg("out_dir"));
}

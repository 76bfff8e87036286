#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "radsynth/degradation.hpp"
#include "radsynth/image.hpp"
#include "radsynth/sr_losses.hpp"

namespace radsynth {

/// Synthetic panoramic-style grayscale image: dark field, a bright curved jaw band
/// with two rows of tooth crowns, and vertical shadows at the borders. Smooth
/// analytic shapes, so any resolution renders the same scene.
ImageGrid toy_radiograph(Resolution res, std::uint64_t seed);
std::vector<ImageGrid> toy_corpus(std::size_t n, Resolution res, std::uint64_t seed);

/// Writes images as {prefix}_{index:04}.png (16-bit).
void write_corpus(const std::vector<ImageGrid>& images, const std::string& dir,
                  const std::string& prefix = "img");
/// Every PNG in dir (sorted by name), converted to grayscale.
std::vector<ImageGrid> load_corpus(const std::string& dir);

struct CropRect {
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;
};

/// CSV lines "file,x,y,width,height" keyed by file name; '#' starts a comment.
std::map<std::string, CropRect> read_crop_rects(const std::string& path);

struct PrepareOptions {
  std::string in_dir;
  std::string out_dir;
  std::string rects_file;
  Resolution hr{1024, 512};
  Resolution lr{256, 128};
};

struct PrepareSummary {
  std::size_t written = 0;
  std::size_t skipped = 0;
  std::string manifest;
};

/// Crop, grayscale and Lanczos-resize every PNG into out/hr and out/lr. Undecodable
/// files are listed in the manifest with status "skipped" and produce no output.
PrepareSummary prepare_dataset(const PrepareOptions& options);

/// SHA-1 of "blob <size>\0" + bytes, as git names file contents.
std::string git_blob_hash(std::span<const unsigned char> bytes);
std::string hash_file(const std::string& path);
/// Combined hash over files and (recursively) directories: SHA-1 of the sorted
/// "relative-path blob-hash" lines.
std::string hash_inputs(const std::vector<std::string>& paths);

struct RunRecord {
  std::string command;
  std::map<std::string, std::string> config;
  std::uint64_t seed = 0;
  std::vector<std::string> inputs;
};

/// Writes {out_dir}/run.json: command, config snapshot, seed, per-input and combined hashes.
void write_run_record(const std::string& out_dir, const RunRecord& record);

/// Exclusive {dir}/.lock held for the lifetime of the object; StateError if taken.
class OutputLock {
 public:
  explicit OutputLock(const std::string& dir);
  ~OutputLock();
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

 private:
  std::string path_;
};

struct PipelineConfig {
  std::string corpus_dir;  // empty: render a toy corpus
  std::string out_dir;
  std::string checkpoint_dir;  // empty: {out_dir}/checkpoints
  std::uint64_t seed = 1;

  std::size_t corpus_size = 48;
  Resolution hr{128, 64};
  int sr_scale = 4;

  int timesteps = 200;
  double schedule_offset = 0.008;
  std::vector<int> denoiser_widths{8, 16, 32};
  long diffusion_steps = 1500;
  int diffusion_batch = 4;
  double diffusion_lr = 1e-3;
  double clip_norm = 1.0;
  double ema_gamma0 = 0.995;

  double eta = 0.0;
  int inference_steps = 50;
  std::size_t samples = 24;

  DegradationRecipe degradation;
  bool multiscale_pool = false;
  LossWeights loss;
  long sr_steps = 300;
  double sr_lr = 2e-3;
  int sr_embed_dim = 8;
  int sr_window = 4;

  std::uint64_t embedder_seed = 0;
  int port = 8080;
  int threads = 1;

  void validate() const;
  [[nodiscard]] Resolution lr() const;
  [[nodiscard]] std::map<std::string, std::string> to_map() const;
};

struct PipelineResult {
  double fid_synthetic = 0.0;
  double fid_noise = 0.0;
  std::size_t real_count = 0;
  std::size_t synthetic_count = 0;
  std::string embedder_id;
};

using LogFn = std::function<void(const std::string&)>;

/// Toy corpus -> diffusion training on LR copies -> sampling -> SR training on degraded
/// pairs -> x{sr_scale} upscaling -> FID against the real corpus and against pure noise.
PipelineResult run_toy_pipeline(const PipelineConfig& config, const LogFn& log = {});

}  // namespace radsynth

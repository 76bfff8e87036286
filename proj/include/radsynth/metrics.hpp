#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "radsynth/image.hpp"

namespace radsynth {

using FeatureVector = std::vector<double>;
using Point2 = std::array<double, 2>;

/// Deterministic image -> fixed-length vector map.
class FeatureEmbedder {
 public:
  virtual ~FeatureEmbedder() = default;
  [[nodiscard]] virtual FeatureVector embed(const ImageGrid& image) const = 0;
  [[nodiscard]] virtual std::size_t dimension() const = 0;
  [[nodiscard]] virtual std::string id() const = 0;
};

/// Grayscale, Lanczos downsample to a small thumbnail, then a seeded Gaussian projection.
class ToyEmbedder final : public FeatureEmbedder {
 public:
  explicit ToyEmbedder(std::uint64_t seed = 0, Resolution thumb = {8, 4}, int dims = 64);
  [[nodiscard]] FeatureVector embed(const ImageGrid& image) const override;
  [[nodiscard]] std::size_t dimension() const override { return static_cast<std::size_t>(dims_); }
  [[nodiscard]] std::string id() const override;

 private:
  std::uint64_t seed_;
  Resolution thumb_;
  int dims_;
  Eigen::MatrixXd projection_;
};

/// Softmax over a seeded linear head on top of an embedder.
class ToyClassifier {
 public:
  explicit ToyClassifier(const FeatureEmbedder& embedder, int classes = 10,
                         std::uint64_t seed = 0, double temperature = 1.0);
  [[nodiscard]] std::vector<double> probabilities(const ImageGrid& image) const;
  [[nodiscard]] int classes() const noexcept { return classes_; }

 private:
  const FeatureEmbedder* embedder_;
  int classes_;
  double temperature_;
  Eigen::MatrixXd weights_;
  Eigen::VectorXd bias_;
};

struct GaussianFit {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  std::size_t count = 0;
};

/// Sample mean and unbiased (n-1) covariance.
GaussianFit fit_gaussian(const std::vector<FeatureVector>& features);

/// |mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a^1/2 S_b S_a^1/2)^1/2).
double frechet_distance(const GaussianFit& a, const GaussianFit& b);

std::vector<FeatureVector> embed_all(const FeatureEmbedder& embedder,
                                     const std::vector<ImageGrid>& images);
double fid(const FeatureEmbedder& embedder, const std::vector<ImageGrid>& a,
           const std::vector<ImageGrid>& b);

struct InceptionScore {
  double mean = 0.0;
  double std = 0.0;
};

/// exp(mean KL(p(y|x) || p(y))) per contiguous split; mean and population std across splits.
InceptionScore inception_score(const std::vector<std::vector<double>>& probs, int splits = 10);

struct TsneConfig {
  double perplexity = 30.0;
  int iterations = 1000;
  /// <= 0 picks n / (4 * early_exaggeration), floored at 1.
  double learning_rate = 0.0;
  double early_exaggeration = 12.0;
  int exaggeration_iterations = 250;
  std::uint64_t seed = 0;
};

/// Row-conditional affinities at the target perplexity.
struct TsneAffinities {
  Eigen::MatrixXd conditional;  // row i = p_{j|i}
  std::vector<double> entropy;  // natural-log entropy of each row
};

TsneAffinities tsne_affinities(const std::vector<FeatureVector>& features, double perplexity);

/// Exact O(n^2) t-SNE to two dimensions; 5 <= n <= 5000, perplexity < n/3.
std::vector<Point2> tsne_2d(const std::vector<FeatureVector>& features,
                            const TsneConfig& config = {});

double centroid_distance(const std::vector<Point2>& a, const std::vector<Point2>& b);

struct ScoredLabel {
  double score = 0.0;  // predicted probability of "fake"
  bool fake = false;
};

struct RocPoint {
  double threshold = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;  // starts at (0,0) with threshold +inf
  double auc = 0.0;
};

/// Fake is the positive class; tied scores share one threshold.
RocCurve roc_curve(const std::vector<ScoredLabel>& items);

/// (2 * wins + ties) / (2 * positives * negatives) by explicit pair enumeration.
double pairwise_auc(const std::vector<ScoredLabel>& items);

struct PrPoint {
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

struct PrCurve {
  std::vector<PrPoint> points;
  double average_precision = 0.0;
};

/// Step-interpolated average precision: sum over thresholds of (R_k - R_{k-1}) * P_k.
PrCurve pr_curve(const std::vector<ScoredLabel>& items);

/// TPR at an FPR: the highest TPR the curve reaches at that FPR (top of a vertical segment).
double tpr_at(const RocCurve& curve, double fpr);

/// Vertical averaging over a common FPR grid.
std::vector<RocPoint> average_roc(const std::vector<RocCurve>& curves,
                                  const std::vector<double>& fpr_grid);

struct MetricReport {
  std::string metric;
  double value = 0.0;
  double std = 0.0;
  std::size_t n = 0;
  std::string embedder_id;
  std::uint64_t seed = 0;
};

std::string to_json(const MetricReport& report);
void write_roc_csv(const std::vector<RocPoint>& points, const std::string& path);
void write_pr_csv(const std::vector<PrPoint>& points, const std::string& path);
void write_points_csv(const std::vector<Point2>& points, const std::vector<std::string>& labels,
                      const std::string& path);

}  // namespace radsynth

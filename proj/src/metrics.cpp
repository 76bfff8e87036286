#include "radsynth/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "radsynth/errors.hpp"
#include "radsynth/rng.hpp"

namespace radsynth {

namespace {

Eigen::MatrixXd symmetric_sqrt(const Eigen::MatrixXd& m) {
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
  const Eigen::VectorXd roots = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * roots.asDiagonal() * eig.eigenvectors().transpose();
}

std::vector<std::size_t> order_by_score_desc(const std::vector<ScoredLabel>& items) {
  std::vector<std::size_t> idx(items.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return items[a].score > items[b].score; });
  return idx;
}

void check_scores(const std::vector<ScoredLabel>& items) {
  for (const auto& it : items) {
    if (!(it.score >= 0.0 && it.score <= 1.0)) throw ArgumentError("score outside [0,1]");
  }
}

}  // namespace

ToyEmbedder::ToyEmbedder(std::uint64_t seed, Resolution thumb, int dims)
    : seed_(seed), thumb_(thumb), dims_(dims) {
  if (thumb.width < 1 || thumb.height < 1 || dims < 1) throw ArgumentError("ToyEmbedder: bad sizes");
  const int in = thumb.width * thumb.height;
  Rng rng = Rng(seed).derive("toy-embedder");
  projection_.resize(dims, in);
  const double s = 1.0 / std::sqrt(static_cast<double>(in));
  for (int r = 0; r < dims; ++r) {
    for (int c = 0; c < in; ++c) projection_(r, c) = s * rng.normal();
  }
}

FeatureVector ToyEmbedder::embed(const ImageGrid& image) const {
  if (image.empty()) throw ArgumentError("ToyEmbedder: empty image");
  const ImageGrid small = resize_lanczos(to_grayscale(image), thumb_);
  const Eigen::Map<const Eigen::VectorXd> x(small.data().data(),
                                            static_cast<Eigen::Index>(small.size()));
  const Eigen::VectorXd y = projection_ * x;
  return FeatureVector(y.data(), y.data() + y.size());
}

std::string ToyEmbedder::id() const {
  return "toy-lanczos" + std::to_string(thumb_.width) + "x" + std::to_string(thumb_.height) +
         "-proj" + std::to_string(dims_) + "-seed" + std::to_string(seed_);
}

ToyClassifier::ToyClassifier(const FeatureEmbedder& embedder, int classes, std::uint64_t seed,
                             double temperature)
    : embedder_(&embedder), classes_(classes), temperature_(temperature) {
  if (classes < 2) throw ArgumentError("ToyClassifier: need >= 2 classes");
  if (!(temperature > 0.0)) throw ArgumentError("ToyClassifier: temperature must be > 0");
  const auto d = static_cast<Eigen::Index>(embedder.dimension());
  Rng rng = Rng(seed).derive("toy-classifier");
  weights_.resize(classes, d);
  bias_.resize(classes);
  const double s = 1.0 / std::sqrt(static_cast<double>(d));
  for (int r = 0; r < classes; ++r) {
    for (Eigen::Index c = 0; c < d; ++c) weights_(r, c) = s * rng.normal();
    bias_(r) = 0.0;
  }
}

std::vector<double> ToyClassifier::probabilities(const ImageGrid& image) const {
  const FeatureVector f = embedder_->embed(image);
  const Eigen::Map<const Eigen::VectorXd> x(f.data(), static_cast<Eigen::Index>(f.size()));
  Eigen::VectorXd logits = (weights_ * x + bias_) / temperature_;
  logits.array() -= logits.maxCoeff();
  Eigen::VectorXd p = logits.array().exp();
  p /= p.sum();
  return std::vector<double>(p.data(), p.data() + p.size());
}

GaussianFit fit_gaussian(const std::vector<FeatureVector>& features) {
  if (features.size() < 2) throw ArgumentError("fit_gaussian: need at least 2 samples");
  const std::size_t d = features.front().size();
  if (d == 0) throw ArgumentError("fit_gaussian: zero-dimensional features");
  const auto n = static_cast<Eigen::Index>(features.size());
  Eigen::MatrixXd x(n, static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < n; ++i) {
    if (features[i].size() != d) throw ArgumentError("fit_gaussian: dimension mismatch");
    for (std::size_t j = 0; j < d; ++j) x(i, static_cast<Eigen::Index>(j)) = features[i][j];
  }
  GaussianFit fit;
  fit.count = features.size();
  fit.mean = x.colwise().mean().transpose();
  const Eigen::MatrixXd centered = x.rowwise() - fit.mean.transpose();
  fit.covariance = (centered.transpose() * centered) / static_cast<double>(n - 1);
  fit.covariance = 0.5 * (fit.covariance + fit.covariance.transpose());
  return fit;
}

double frechet_distance(const GaussianFit& a, const GaussianFit& b) {
  if (a.mean.size() != b.mean.size() || a.covariance.rows() != b.covariance.rows() ||
      a.covariance.rows() != a.mean.size()) {
    throw ArgumentError("frechet_distance: dimension mismatch");
  }
  const Eigen::MatrixXd root_a = symmetric_sqrt(a.covariance);
  const Eigen::MatrixXd inner = root_a * b.covariance * root_a;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (inner + inner.transpose()),
                                                     Eigen::EigenvaluesOnly);
  const double tr_sqrt = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double value = (a.mean - b.mean).squaredNorm() + a.covariance.trace() +
                       b.covariance.trace() - 2.0 * tr_sqrt;
  return std::max(value, 0.0);
}

std::vector<FeatureVector> embed_all(const FeatureEmbedder& embedder,
                                     const std::vector<ImageGrid>& images) {
  std::vector<FeatureVector> out;
  out.reserve(images.size());
  for (const auto& img : images) out.push_back(embedder.embed(img));
  return out;
}

double fid(const FeatureEmbedder& embedder, const std::vector<ImageGrid>& a,
           const std::vector<ImageGrid>& b) {
  return frechet_distance(fit_gaussian(embed_all(embedder, a)), fit_gaussian(embed_all(embedder, b)));
}

InceptionScore inception_score(const std::vector<std::vector<double>>& probs, int splits) {
  if (splits < 1) throw ArgumentError("inception_score: splits must be >= 1");
  if (probs.empty()) throw ArgumentError("inception_score: no predictions");
  if (static_cast<std::size_t>(splits) > probs.size()) {
    throw ArgumentError("inception_score: more splits than samples");
  }
  const std::size_t c = probs.front().size();
  for (const auto& row : probs) {
    if (row.size() != c || c == 0) throw ArgumentError("inception_score: ragged rows");
    double s = 0.0;
    for (double p : row) {
      if (!(p >= 0.0)) throw ArgumentError("inception_score: negative probability");
      s += p;
    }
    if (std::abs(s - 1.0) > 1e-6) throw ArgumentError("inception_score: row does not sum to 1");
  }
  std::vector<double> scores;
  const std::size_t n = probs.size();
  for (int k = 0; k < splits; ++k) {
    const std::size_t lo = n * k / splits, hi = n * (k + 1) / splits;
    std::vector<double> marginal(c, 0.0);
    for (std::size_t i = lo; i < hi; ++i) {
      for (std::size_t j = 0; j < c; ++j) marginal[j] += probs[i][j];
    }
    for (double& m : marginal) m /= static_cast<double>(hi - lo);
    double kl = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
      for (std::size_t j = 0; j < c; ++j) {
        const double p = probs[i][j];
        if (p > 0.0) kl += p * (std::log(p) - std::log(marginal[j]));
      }
    }
    scores.push_back(std::exp(kl / static_cast<double>(hi - lo)));
  }
  InceptionScore is;
  is.mean = std::accumulate(scores.begin(), scores.end(), 0.0) / scores.size();
  double var = 0.0;
  for (double s : scores) var += (s - is.mean) * (s - is.mean);
  is.std = std::sqrt(var / scores.size());
  return is;
}

namespace {

Eigen::MatrixXd to_matrix(const std::vector<FeatureVector>& features) {
  const std::size_t d = features.front().size();
  Eigen::MatrixXd x(static_cast<Eigen::Index>(features.size()), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i].size() != d) throw ArgumentError("t-SNE: dimension mismatch");
    for (std::size_t j = 0; j < d; ++j) {
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = features[i][j];
    }
  }
  return x;
}

Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& x) {
  const Eigen::VectorXd norms = x.rowwise().squaredNorm();
  Eigen::MatrixXd d = (-2.0 * x * x.transpose()).colwise() + norms;
  d.rowwise() += norms.transpose();
  d = d.cwiseMax(0.0);
  d.diagonal().setZero();
  return d;
}

}  // namespace

TsneAffinities tsne_affinities(const std::vector<FeatureVector>& features, double perplexity) {
  if (features.size() < 2) throw ArgumentError("t-SNE: need at least 2 points");
  if (!(perplexity > 0.0)) throw ArgumentError("t-SNE: perplexity must be > 0");
  const Eigen::MatrixXd d = squared_distances(to_matrix(features));
  const auto n = d.rows();
  const double target = std::log(perplexity);
  TsneAffinities out;
  out.conditional = Eigen::MatrixXd::Zero(n, n);
  out.entropy.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
    double dmin = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) dmin = std::min(dmin, d(i, j));
    }
    Eigen::VectorXd row(n);
    double entropy = 0.0;
    for (int iter = 0; iter < 200; ++iter) {
      double sum = 0.0, weighted = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        // Shifting by the nearest distance keeps exp() away from underflow.
        row(j) = j == i ? 0.0 : std::exp(-beta * (d(i, j) - dmin));
        sum += row(j);
        weighted += row(j) * (d(i, j) - dmin);
      }
      entropy = std::log(sum) + beta * weighted / sum;
      row /= sum;
      const double diff = entropy - target;
      if (std::abs(diff) < 1e-10) break;
      if (diff > 0) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
      } else {
        hi = beta;
        beta = 0.5 * (beta + lo);
      }
    }
    out.conditional.row(i) = row.transpose();
    out.entropy[static_cast<std::size_t>(i)] = entropy;
  }
  return out;
}

std::vector<Point2> tsne_2d(const std::vector<FeatureVector>& features, const TsneConfig& config) {
  const std::size_t n = features.size();
  if (n < 5) throw ArgumentError("t-SNE: need at least 5 points");
  if (n > 5000) {
    throw ArgumentError("t-SNE: exact solver limited to 5000 points; subsample the input");
  }
  if (!(config.perplexity * 3.0 < static_cast<double>(n))) {
    throw ArgumentError("t-SNE: perplexity must be < n/3");
  }
  if (config.iterations < 1) throw ArgumentError("t-SNE: iterations must be >= 1");
  const auto aff = tsne_affinities(features, config.perplexity);
  const auto N = static_cast<Eigen::Index>(n);
  Eigen::MatrixXd p = aff.conditional + aff.conditional.transpose();
  p /= p.sum();
  p = p.cwiseMax(1e-12);

  Rng rng = Rng(config.seed).derive("tsne-init");
  Eigen::MatrixXd y(N, 2);
  for (Eigen::Index i = 0; i < N; ++i) {
    y(i, 0) = 1e-2 * rng.normal();
    y(i, 1) = 1e-2 * rng.normal();
  }
  const double lr = config.learning_rate > 0.0
                        ? config.learning_rate
                        : std::max(static_cast<double>(n) /
                                       (4.0 * std::max(config.early_exaggeration, 1.0)),
                                   1.0);
  Eigen::MatrixXd update = Eigen::MatrixXd::Zero(N, 2);
  Eigen::MatrixXd gains = Eigen::MatrixXd::Ones(N, 2);
  Eigen::MatrixXd num(N, N);
  Eigen::MatrixXd grad(N, 2);
  for (int it = 0; it < config.iterations; ++it) {
    const double exaggeration = it < config.exaggeration_iterations ? config.early_exaggeration : 1.0;
    const double momentum = it < 250 ? 0.5 : 0.8;
    const Eigen::VectorXd sq = y.rowwise().squaredNorm();
    num = (-2.0 * y * y.transpose()).colwise() + sq;
    num.rowwise() += sq.transpose();
    num = (1.0 + num.array()).inverse().matrix();
    num.diagonal().setZero();
    const double qsum = num.sum();
    const Eigen::MatrixXd pq = (exaggeration * p.array() - num.array() / qsum).matrix();
    const Eigen::MatrixXd w = (pq.array() * num.array()).matrix();
    const Eigen::VectorXd wsum = w.rowwise().sum();
    grad = 4.0 * (wsum.asDiagonal() * y - w * y);
    for (Eigen::Index i = 0; i < N; ++i) {
      for (int k = 0; k < 2; ++k) {
        const bool same = (grad(i, k) > 0) == (update(i, k) > 0);
        gains(i, k) = std::max(same ? gains(i, k) * 0.8 : gains(i, k) + 0.2, 0.01);
      }
    }
    update = momentum * update - lr * gains.cwiseProduct(grad);
    y += update;
    y.rowwise() -= y.colwise().mean();
  }
  std::vector<Point2> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = {y(static_cast<Eigen::Index>(i), 0), y(static_cast<Eigen::Index>(i), 1)};
  }
  return out;
}

double centroid_distance(const std::vector<Point2>& a, const std::vector<Point2>& b) {
  if (a.empty() || b.empty()) throw ArgumentError("centroid_distance: empty point set");
  auto centroid = [](const std::vector<Point2>& s) {
    Point2 c{0.0, 0.0};
    for (const auto& p : s) {
      c[0] += p[0];
      c[1] += p[1];
    }
    c[0] /= static_cast<double>(s.size());
    c[1] /= static_cast<double>(s.size());
    return c;
  };
  const Point2 ca = centroid(a), cb = centroid(b);
  return std::hypot(ca[0] - cb[0], ca[1] - cb[1]);
}

RocCurve roc_curve(const std::vector<ScoredLabel>& items) {
  check_scores(items);
  long pos = 0, neg = 0;
  for (const auto& it : items) (it.fake ? pos : neg)++;
  if (pos == 0 || neg == 0) throw ArgumentError("roc_curve: both classes must be present");
  const auto idx = order_by_score_desc(items);
  RocCurve curve;
  curve.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  long tp = 0, fp = 0, prev_tp = 0, prev_fp = 0;
  // Twice the trapezoid area in units of one positive-negative pair; stays integral.
  long long area2 = 0;
  for (std::size_t k = 0; k < idx.size();) {
    const double thr = items[idx[k]].score;
    while (k < idx.size() && items[idx[k]].score == thr) {
      (items[idx[k]].fake ? tp : fp)++;
      ++k;
    }
    area2 += static_cast<long long>(fp - prev_fp) * (tp + prev_tp);
    prev_tp = tp;
    prev_fp = fp;
    curve.points.push_back({thr, static_cast<double>(fp) / neg, static_cast<double>(tp) / pos});
  }
  curve.auc = static_cast<double>(area2) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
  return curve;
}

double pairwise_auc(const std::vector<ScoredLabel>& items) {
  long long twice = 0, pos = 0, neg = 0;
  for (const auto& a : items) (a.fake ? pos : neg)++;
  if (pos == 0 || neg == 0) throw ArgumentError("pairwise_auc: both classes must be present");
  for (const auto& a : items) {
    if (!a.fake) continue;
    for (const auto& b : items) {
      if (b.fake) continue;
      if (a.score > b.score) twice += 2;
      else if (a.score == b.score) twice += 1;
    }
  }
  return static_cast<double>(twice) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

PrCurve pr_curve(const std::vector<ScoredLabel>& items) {
  check_scores(items);
  long pos = 0;
  for (const auto& it : items) pos += it.fake ? 1 : 0;
  if (pos == 0) throw ArgumentError("pr_curve: no positive items");
  const auto idx = order_by_score_desc(items);
  PrCurve curve;
  long tp = 0, fp = 0;
  double prev_recall = 0.0;
  for (std::size_t k = 0; k < idx.size();) {
    const double thr = items[idx[k]].score;
    while (k < idx.size() && items[idx[k]].score == thr) {
      (items[idx[k]].fake ? tp : fp)++;
      ++k;
    }
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double recall = static_cast<double>(tp) / static_cast<double>(pos);
    curve.average_precision += (recall - prev_recall) * precision;
    prev_recall = recall;
    curve.points.push_back({thr, precision, recall});
  }
  return curve;
}

double tpr_at(const RocCurve& curve, double fpr) {
  double best = 0.0;
  for (const auto& p : curve.points) {
    if (p.fpr <= fpr) best = std::max(best, p.tpr);
  }
  return best;
}

std::vector<RocPoint> average_roc(const std::vector<RocCurve>& curves,
                                  const std::vector<double>& fpr_grid) {
  if (curves.empty()) throw ArgumentError("average_roc: no curves");
  std::vector<RocPoint> out;
  for (double f : fpr_grid) {
    if (!(f >= 0.0 && f <= 1.0)) throw ArgumentError("average_roc: grid outside [0,1]");
    double s = 0.0;
    for (const auto& c : curves) s += tpr_at(c, f);
    out.push_back({std::numeric_limits<double>::quiet_NaN(), f, s / curves.size()});
  }
  return out;
}

std::string to_json(const MetricReport& r) {
  nlohmann::json j = {{"metric", r.metric}, {"value", r.value},          {"std", r.std},
                      {"n", r.n},           {"embedder_id", r.embedder_id}, {"seed", r.seed}};
  return j.dump(2);
}

void write_roc_csv(const std::vector<RocPoint>& points, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out.precision(12);
  out << "threshold,fpr,tpr\n";
  for (const auto& p : points) out << p.threshold << ',' << p.fpr << ',' << p.tpr << '\n';
}

void write_pr_csv(const std::vector<PrPoint>& points, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out.precision(12);
  out << "threshold,precision,recall\n";
  for (const auto& p : points) out << p.threshold << ',' << p.precision << ',' << p.recall << '\n';
}

void write_points_csv(const std::vector<Point2>& points, const std::vector<std::string>& labels,
                      const std::string& path) {
  if (!labels.empty() && labels.size() != points.size()) {
    throw ArgumentError("write_points_csv: label count mismatch");
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out.precision(12);
  out << "x,y,label\n";
  for (std::size_t i = 0; i < points.size(); ++i) {
    out << points[i][0] << ',' << points[i][1] << ',' << (labels.empty() ? "" : labels[i]) << '\n';
  }
}

}  // namespace radsynth

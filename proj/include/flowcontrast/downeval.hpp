#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "flowcontrast/numcore.hpp"

// Downstream use of frozen edge embeddings: clustering with label mapping, a
// linear probe, and the classification metric suite.
namespace flowcontrast::downeval {

using numcore::Matrix;

struct KMeansResult {
  std::vector<std::size_t> assignments;
  Matrix centroids;
  std::vector<double> inertia_trace;  // after each assignment step of the kept restart
  double inertia = 0.0;
  std::size_t iterations = 0;
};

/// k-means++ seeding then Lloyd iterations; the restart with the lowest
/// inertia is kept. Throws InvalidArgument when clusters is 0 or exceeds the
/// number of rows.
KMeansResult kmeans_embed(const Matrix& x, std::size_t clusters, std::uint64_t seed,
                          std::size_t max_iter = 100, std::size_t restarts = 4);

/// Index of the nearest centroid for every row.
std::vector<std::size_t> nearest_centroid(const Matrix& x, const Matrix& centroids);

/// Maximum-weight one-to-one assignment on a square matrix; returns row -> column.
std::vector<std::size_t> hungarian_max(const std::vector<std::vector<double>>& weight);

struct ClusterMapping {
  std::vector<std::size_t> cluster_to_label;
  std::vector<bool> surplus;  // mapped by majority rather than by the assignment
  double accuracy = 0.0;      // fraction in [0, 1]
  std::size_t matched = 0;
};

ClusterMapping map_clusters(std::span<const std::size_t> assignments,
                            std::span<const std::size_t> labels);

// ---------------------------------------------------------------------------

struct ProbeOptions {
  std::size_t epochs = 200;
  double learning_rate = 0.05;
  std::uint64_t seed = 0;
};

/// Affine classifier over standardized inputs. Binary problems use one logit
/// with a sigmoid; others use a softmax over all classes.
struct LinearProbe {
  std::size_t classes = 0;
  std::vector<double> mean;
  std::vector<double> scale;
  Matrix weight;  // outputs x d
  std::vector<double> bias;
  std::vector<double> loss_trace;

  bool binary() const { return classes == 2; }
  Matrix probabilities(const Matrix& x) const;  // n x classes
  std::vector<std::size_t> predict(const Matrix& x) const;

  nlohmann::json to_json() const;
  static LinearProbe from_json(const nlohmann::json& j);
};

/// Full-batch Adam on cross-entropy (binary cross-entropy for two classes).
/// Throws DegenerateError when fewer than two distinct labels are present.
LinearProbe linear_probe(const Matrix& x, std::span<const std::size_t> labels,
                         std::size_t classes, const ProbeOptions& opts);

// ---------------------------------------------------------------------------

struct ConfusionMatrix {
  std::vector<std::string> classes;
  std::vector<std::vector<std::size_t>> counts;  // [true][pred]

  std::size_t total() const;
  std::vector<std::size_t> supports() const;
};

/// Percentages. A zero denominator gives 0 and raises the matching flag.
struct ClassMetrics {
  std::string name;
  std::size_t support = 0;
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool precision_undefined = false;
  bool recall_undefined = false;
  bool f1_undefined = false;
};

struct WeightedAverage {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct RocPoint {
  double threshold = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocCurve {
  std::string name;
  std::vector<RocPoint> points;
  std::optional<double> auc;  // absent when the truth has a single class
};

struct RocData {
  std::vector<RocCurve> per_class;
  RocCurve micro;
};

struct MetricReport {
  std::string mode;
  std::string config_hash;
  double accuracy = 0.0;
  std::optional<ClassMetrics> positive;  // binary tasks
  std::vector<ClassMetrics> per_class;
  WeightedAverage weighted;
  ConfusionMatrix confusion;
  std::optional<RocData> roc;

  nlohmann::json to_json() const;
};

/// Binary counts for one positive class.
ClassMetrics class_metrics(std::size_t tp, std::size_t fp, std::size_t fn, std::size_t tn,
                           std::string name = {});

ConfusionMatrix confusion_matrix(std::span<const std::size_t> truth,
                                 std::span<const std::size_t> predicted,
                                 const std::vector<std::string>& classes);

/// Accuracy, one-vs-rest per-class metrics, support-weighted averages and the
/// confusion matrix; `positive_class` adds the binary headline figures.
MetricReport compute_metrics(std::span<const std::size_t> truth,
                             std::span<const std::size_t> predicted,
                             const std::vector<std::string>& classes,
                             std::optional<std::size_t> positive_class = std::nullopt);

/// Threshold sweep over the unique scores, trapezoid AUC.
RocCurve roc_curve(std::span<const double> scores, const std::vector<bool>& positive,
                   std::string name = {});

/// scores: n x classes. Per-class one-vs-rest curves and the micro-average
/// pooled over every (sample, class) decision.
RocData roc_points(const Matrix& scores, std::span<const std::size_t> truth,
                   const std::vector<std::string>& classes);

std::string confusion_csv(const ConfusionMatrix& cm);
std::string roc_csv(const RocData& roc);

// ---------------------------------------------------------------------------

struct EvalOutcome {
  MetricReport report;
  std::vector<std::size_t> predictions;
  Matrix scores;
};

struct ClusterOptions {
  std::uint64_t seed = 0;
  std::size_t max_iter = 100;
  std::size_t restarts = 4;
};

/// k-means fitted on `fit` (label-free), clusters mapped to labels with
/// `fit_labels`, then evaluated on `eval` by nearest centroid. Scores are
/// negative distances to the closest centroid mapped to each class.
EvalOutcome evaluate_clustering(const Matrix& fit, std::span<const std::size_t> fit_labels,
                                const Matrix& eval, std::span<const std::size_t> eval_labels,
                                const std::vector<std::string>& classes,
                                const ClusterOptions& opts,
                                std::optional<std::size_t> positive_class = std::nullopt);

EvalOutcome evaluate_probe(const Matrix& fit, std::span<const std::size_t> fit_labels,
                           const Matrix& eval, std::span<const std::size_t> eval_labels,
                           const std::vector<std::string>& classes, const ProbeOptions& opts,
                           std::optional<std::size_t> positive_class = std::nullopt);

}  // namespace flowcontrast::downeval

#include "flowcontrast/downeval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "flowcontrast/errors.hpp"
#include "flowcontrast/textio.hpp"

namespace flowcontrast::downeval {

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    s += d * d;
  }
  return s;
}

double assign(const Matrix& x, const Matrix& centroids, std::vector<std::size_t>& out) {
  out.resize(x.rows());
  double inertia = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t c = 0; c < centroids.rows(); ++c) {
      const double d = squared_distance(x.row(i), centroids.row(c));
      if (d < best) {
        best = d;
        arg = c;
      }
    }
    out[i] = arg;
    inertia += best;
  }
  return inertia;
}

Matrix plus_plus_seed(const Matrix& x, std::size_t k, numcore::Rng& rng) {
  Matrix c(k, x.cols());
  std::vector<double> d2(x.rows(), std::numeric_limits<double>::infinity());
  std::size_t pick = rng.index(x.rows());
  for (std::size_t j = 0; j < k; ++j) {
    std::copy(x.row(pick).begin(), x.row(pick).end(), c.row(j).begin());
    if (j + 1 == k) break;
    double total = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
      d2[i] = std::min(d2[i], squared_distance(x.row(i), c.row(j)));
      total += d2[i];
    }
    if (total <= 0.0) {
      pick = rng.index(x.rows());
      continue;
    }
    double r = rng.uniform() * total;
    pick = x.rows() - 1;
    for (std::size_t i = 0; i < x.rows(); ++i) {
      r -= d2[i];
      if (r < 0.0 && d2[i] > 0.0) {
        pick = i;
        break;
      }
    }
  }
  return c;
}

KMeansResult lloyd(const Matrix& x, Matrix centroids, std::size_t max_iter) {
  KMeansResult r;
  std::vector<std::size_t> prev;
  for (std::size_t it = 0; it < std::max<std::size_t>(max_iter, 1); ++it) {
    r.inertia = assign(x, centroids, r.assignments);
    r.inertia_trace.push_back(r.inertia);
    r.iterations = it + 1;
    if (r.assignments == prev) break;
    prev = r.assignments;
    Matrix sums(centroids.rows(), x.cols());
    std::vector<std::size_t> counts(centroids.rows(), 0);
    for (std::size_t i = 0; i < x.rows(); ++i) {
      auto s = sums.row(r.assignments[i]);
      for (std::size_t k = 0; k < x.cols(); ++k) s[k] += x(i, k);
      ++counts[r.assignments[i]];
    }
    for (std::size_t c = 0; c < centroids.rows(); ++c) {
      if (counts[c] == 0) continue;  // empty cluster keeps its centroid
      for (std::size_t k = 0; k < x.cols(); ++k) {
        centroids(c, k) = sums(c, k) / static_cast<double>(counts[c]);
      }
    }
  }
  r.centroids = std::move(centroids);
  return r;
}

}  // namespace

KMeansResult kmeans_embed(const Matrix& x, std::size_t clusters, std::uint64_t seed,
                          std::size_t max_iter, std::size_t restarts) {
  if (clusters == 0) throw InvalidArgument("kmeans: clusters must be >= 1");
  if (clusters > x.rows()) throw InvalidArgument("kmeans: more clusters than samples");
  if (!x.all_finite()) throw InvalidArgument("kmeans: non-finite input");
  numcore::Rng rng(seed);
  KMeansResult best;
  bool have = false;
  for (std::size_t r = 0; r < std::max<std::size_t>(restarts, 1); ++r) {
    KMeansResult cand = lloyd(x, plus_plus_seed(x, clusters, rng), max_iter);
    if (!have || cand.inertia < best.inertia) {
      best = std::move(cand);
      have = true;
    }
  }
  return best;
}

std::vector<std::size_t> nearest_centroid(const Matrix& x, const Matrix& centroids) {
  if (x.cols() != centroids.cols()) throw InvalidArgument("nearest_centroid: dimension mismatch");
  std::vector<std::size_t> out;
  assign(x, centroids, out);
  return out;
}

std::vector<std::size_t> hungarian_max(const std::vector<std::vector<double>>& weight) {
  const std::size_t n = weight.size();
  if (n == 0) return {};
  double top = 0.0;
  for (const auto& row : weight) {
    if (row.size() != n) throw InvalidArgument("hungarian: matrix must be square");
    for (double w : row) top = std::max(top, w);
  }
  // Minimisation form with 1-based potentials.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = (top - weight[i0 - 1][j - 1]) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> row_to_col(n);
  for (std::size_t j = 1; j <= n; ++j) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

ClusterMapping map_clusters(std::span<const std::size_t> assignments,
                            std::span<const std::size_t> labels) {
  if (assignments.size() != labels.size()) {
    throw InvalidArgument("map_clusters: length mismatch");
  }
  ClusterMapping m;
  if (assignments.empty()) return m;
  const std::size_t k = *std::max_element(assignments.begin(), assignments.end()) + 1;
  const std::size_t l = *std::max_element(labels.begin(), labels.end()) + 1;
  const std::size_t n = std::max(k, l);
  std::vector<std::vector<double>> table(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < assignments.size(); ++i) table[assignments[i]][labels[i]] += 1.0;
  const auto match = hungarian_max(table);
  m.cluster_to_label.resize(k);
  m.surplus.assign(k, false);
  std::vector<bool> label_taken(l, false);
  for (std::size_t c = 0; c < k; ++c) {
    if (match[c] < l) {
      m.cluster_to_label[c] = match[c];
      label_taken[match[c]] = true;
    }
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (match[c] < l) continue;
    m.surplus[c] = true;
    const auto& row = table[c];
    m.cluster_to_label[c] =
        static_cast<std::size_t>(std::max_element(row.begin(), row.begin() + l) - row.begin());
  }
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    if (m.cluster_to_label[assignments[i]] == labels[i]) ++m.matched;
  }
  m.accuracy = static_cast<double>(m.matched) / static_cast<double>(assignments.size());
  return m;
}

// ---------------------------------------------------------------------------

namespace {

Matrix standardize(const Matrix& x, const std::vector<double>& mean,
                   const std::vector<double>& scale) {
  if (x.cols() != mean.size()) throw InvalidArgument("probe: dimension mismatch");
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t k = 0; k < x.cols(); ++k) out(i, k) = (x(i, k) - mean[k]) / scale[k];
  }
  return out;
}

double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

// Probabilities and mean loss for standardized inputs; fills gradients when asked.
double probe_pass(const LinearProbe& p, const Matrix& xs, std::span<const std::size_t> labels,
                  Matrix* probs, Matrix* grad_w, std::vector<double>* grad_b) {
  const std::size_t n = xs.rows();
  const std::size_t outs = p.weight.rows();
  double loss = 0.0;
  std::vector<double> logits(outs);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t o = 0; o < outs; ++o) {
      logits[o] = p.bias[o] + numcore::dot(p.weight.row(o), xs.row(i));
    }
    std::vector<double> delta(outs);
    if (p.binary()) {
      const double q = sigmoid(logits[0]);
      if (probs) {
        (*probs)(i, 0) = 1.0 - q;
        (*probs)(i, 1) = q;
      }
      if (!labels.empty()) {
        const double y = labels[i] == 1 ? 1.0 : 0.0;
        // log(1 + e^t) - y t, stable form
        const double t = logits[0];
        loss += std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t))) - y * t;
        delta[0] = q - y;
      }
    } else {
      const auto sm = numcore::softmax(logits);
      if (probs) std::copy(sm.begin(), sm.end(), probs->row(i).begin());
      if (!labels.empty()) {
        loss -= logits[labels[i]] - numcore::log_sum_exp(logits);
        for (std::size_t o = 0; o < outs; ++o) delta[o] = sm[o] - (o == labels[i] ? 1.0 : 0.0);
      }
    }
    if (grad_w) {
      for (std::size_t o = 0; o < outs; ++o) {
        const double g = delta[o] / static_cast<double>(n);
        auto row = grad_w->row(o);
        for (std::size_t k = 0; k < xs.cols(); ++k) row[k] += g * xs(i, k);
        (*grad_b)[o] += g;
      }
    }
  }
  return n ? loss / static_cast<double>(n) : 0.0;
}

}  // namespace

Matrix LinearProbe::probabilities(const Matrix& x) const {
  const Matrix xs = standardize(x, mean, scale);
  Matrix probs(x.rows(), classes);
  probe_pass(*this, xs, {}, &probs, nullptr, nullptr);
  return probs;
}

std::vector<std::size_t> LinearProbe::predict(const Matrix& x) const {
  const Matrix probs = probabilities(x);
  std::vector<std::size_t> out(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto row = probs.row(i);
    out[i] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

nlohmann::json LinearProbe::to_json() const {
  return {{"classes", classes},
          {"mean", mean},
          {"scale", scale},
          {"weight", {{"rows", weight.rows()}, {"cols", weight.cols()}, {"data", weight.values()}}},
          {"bias", bias}};
}

LinearProbe LinearProbe::from_json(const nlohmann::json& j) {
  LinearProbe p;
  p.classes = j.at("classes").get<std::size_t>();
  p.mean = j.at("mean").get<std::vector<double>>();
  p.scale = j.at("scale").get<std::vector<double>>();
  const auto& w = j.at("weight");
  p.weight = Matrix(w.at("rows").get<std::size_t>(), w.at("cols").get<std::size_t>());
  const auto data = w.at("data").get<std::vector<double>>();
  if (data.size() != p.weight.size()) throw InvalidArgument("probe json: weight size");
  std::copy(data.begin(), data.end(), p.weight.values().begin());
  p.bias = j.at("bias").get<std::vector<double>>();
  return p;
}

LinearProbe linear_probe(const Matrix& x, std::span<const std::size_t> labels,
                         std::size_t classes, const ProbeOptions& opts) {
  if (x.rows() != labels.size()) throw InvalidArgument("linear_probe: length mismatch");
  if (x.rows() == 0 || x.cols() == 0) throw InvalidArgument("linear_probe: empty input");
  std::set<std::size_t> distinct(labels.begin(), labels.end());
  if (*distinct.rbegin() >= classes) throw InvalidArgument("linear_probe: label out of range");
  if (distinct.size() < 2) throw DegenerateError("linear_probe: single-class input");

  LinearProbe p;
  p.classes = classes;
  const std::size_t d = x.cols(), n = x.rows();
  p.mean.assign(d, 0.0);
  p.scale.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < d; ++k) p.mean[k] += x(i, k) / static_cast<double>(n);
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < d; ++k) {
      const double c = x(i, k) - p.mean[k];
      p.scale[k] += c * c / static_cast<double>(n);
    }
  }
  for (double& s : p.scale) s = s > 1e-24 ? std::sqrt(s) : 1.0;

  const std::size_t outs = classes == 2 ? 1 : classes;
  p.weight = Matrix(outs, d);
  numcore::Rng rng(opts.seed);
  numcore::glorot_uniform(p.weight, rng);
  p.bias.assign(outs, 0.0);

  const Matrix xs = standardize(x, p.mean, p.scale);
  numcore::AdamState wstate(p.weight.size(), {opts.learning_rate});
  numcore::AdamState bstate(outs, {opts.learning_rate});
  for (std::size_t e = 0; e < opts.epochs; ++e) {
    Matrix gw(outs, d);
    std::vector<double> gb(outs, 0.0);
    p.loss_trace.push_back(probe_pass(p, xs, labels, nullptr, &gw, &gb));
    numcore::adam_step(p.weight.values(), gw.values(), wstate);
    numcore::adam_step(p.bias, gb, bstate);
  }
  return p;
}

// ---------------------------------------------------------------------------

std::size_t ConfusionMatrix::total() const {
  std::size_t t = 0;
  for (const auto& row : counts) t = std::accumulate(row.begin(), row.end(), t);
  return t;
}

std::vector<std::size_t> ConfusionMatrix::supports() const {
  std::vector<std::size_t> s;
  for (const auto& row : counts) s.push_back(std::accumulate(row.begin(), row.end(), std::size_t{0}));
  return s;
}

ClassMetrics class_metrics(std::size_t tp, std::size_t fp, std::size_t fn, std::size_t tn,
                           std::string name) {
  ClassMetrics m;
  m.name = std::move(name);
  m.tp = tp;
  m.fp = fp;
  m.fn = fn;
  m.tn = tn;
  m.support = tp + fn;
  if (tp + fp == 0) {
    m.precision_undefined = true;
  } else {
    m.precision = 100.0 * static_cast<double>(tp) / static_cast<double>(tp + fp);
  }
  if (tp + fn == 0) {
    m.recall_undefined = true;
  } else {
    m.recall = 100.0 * static_cast<double>(tp) / static_cast<double>(tp + fn);
  }
  if (m.precision + m.recall == 0.0) {
    m.f1_undefined = true;
  } else {
    m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
  }
  return m;
}

ConfusionMatrix confusion_matrix(std::span<const std::size_t> truth,
                                 std::span<const std::size_t> predicted,
                                 const std::vector<std::string>& classes) {
  if (truth.size() != predicted.size()) throw InvalidArgument("metrics: length mismatch");
  if (truth.empty()) throw InvalidArgument("metrics: empty input");
  ConfusionMatrix cm;
  cm.classes = classes;
  cm.counts.assign(classes.size(), std::vector<std::size_t>(classes.size(), 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] >= classes.size() || predicted[i] >= classes.size()) {
      throw InvalidArgument("metrics: label outside the class list");
    }
    ++cm.counts[truth[i]][predicted[i]];
  }
  return cm;
}

MetricReport compute_metrics(std::span<const std::size_t> truth,
                             std::span<const std::size_t> predicted,
                             const std::vector<std::string>& classes,
                             std::optional<std::size_t> positive_class) {
  MetricReport r;
  r.confusion = confusion_matrix(truth, predicted, classes);
  const std::size_t total = r.confusion.total();
  const std::size_t k = classes.size();
  std::size_t correct = 0;
  for (std::size_t c = 0; c < k; ++c) correct += r.confusion.counts[c][c];
  r.accuracy = 100.0 * static_cast<double>(correct) / static_cast<double>(total);

  for (std::size_t c = 0; c < k; ++c) {
    std::size_t tp = r.confusion.counts[c][c], fp = 0, fn = 0;
    for (std::size_t o = 0; o < k; ++o) {
      if (o == c) continue;
      fp += r.confusion.counts[o][c];
      fn += r.confusion.counts[c][o];
    }
    r.per_class.push_back(class_metrics(tp, fp, fn, total - tp - fp - fn, classes[c]));
  }
  for (const auto& m : r.per_class) {
    const double w = static_cast<double>(m.support) / static_cast<double>(total);
    r.weighted.precision += w * m.precision;
    r.weighted.recall += w * m.recall;
    r.weighted.f1 += w * m.f1;
  }
  if (positive_class) {
    if (*positive_class >= k) throw InvalidArgument("metrics: positive class out of range");
    r.positive = r.per_class[*positive_class];
  }
  return r;
}

RocCurve roc_curve(std::span<const double> scores, const std::vector<bool>& positive,
                   std::string name) {
  if (scores.size() != positive.size()) throw InvalidArgument("roc: length mismatch");
  if (scores.empty()) throw InvalidArgument("roc: empty input");
  RocCurve c;
  c.name = std::move(name);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  const auto pos = static_cast<std::size_t>(std::count(positive.begin(), positive.end(), true));
  const std::size_t neg = positive.size() - pos;
  auto rate = [](std::size_t x, std::size_t d) {
    return d == 0 ? 0.0 : static_cast<double>(x) / static_cast<double>(d);
  };
  c.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  std::size_t tp = 0, fp = 0;
  for (std::size_t idx = 0; idx < order.size();) {
    const double s = scores[order[idx]];
    while (idx < order.size() && scores[order[idx]] == s) {
      if (positive[order[idx]]) ++tp; else ++fp;
      ++idx;
    }
    c.points.push_back({s, rate(fp, neg), rate(tp, pos)});
  }
  if (pos > 0 && neg > 0) {
    double auc = 0.0;
    for (std::size_t i = 1; i < c.points.size(); ++i) {
      auc += (c.points[i].fpr - c.points[i - 1].fpr) *
             (c.points[i].tpr + c.points[i - 1].tpr) / 2.0;
    }
    c.auc = auc;
  }
  return c;
}

RocData roc_points(const Matrix& scores, std::span<const std::size_t> truth,
                   const std::vector<std::string>& classes) {
  if (scores.rows() != truth.size() || scores.cols() != classes.size()) {
    throw InvalidArgument("roc_points: shape mismatch");
  }
  RocData r;
  std::vector<double> pooled;
  std::vector<bool> pooled_pos;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    std::vector<double> s(truth.size());
    std::vector<bool> p(truth.size());
    for (std::size_t i = 0; i < truth.size(); ++i) {
      s[i] = scores(i, c);
      p[i] = truth[i] == c;
    }
    pooled.insert(pooled.end(), s.begin(), s.end());
    pooled_pos.insert(pooled_pos.end(), p.begin(), p.end());
    r.per_class.push_back(roc_curve(s, p, classes[c]));
  }
  r.micro = roc_curve(pooled, pooled_pos, "micro");
  return r;
}

namespace {

nlohmann::json class_json(const ClassMetrics& m) {
  return {{"name", m.name},
          {"support", m.support},
          {"tp", m.tp},
          {"fp", m.fp},
          {"fn", m.fn},
          {"tn", m.tn},
          {"precision", m.precision},
          {"recall", m.recall},
          {"f1", m.f1},
          {"precision_undefined", m.precision_undefined},
          {"recall_undefined", m.recall_undefined},
          {"f1_undefined", m.f1_undefined}};
}

nlohmann::json auc_json(const RocCurve& c) {
  return c.auc ? nlohmann::json(*c.auc) : nlohmann::json(nullptr);
}

}  // namespace

nlohmann::json MetricReport::to_json() const {
  nlohmann::json j;
  j["format"] = "flowcontrast-metrics/1";
  j["mode"] = mode;
  j["config_hash"] = config_hash;
  j["samples"] = confusion.total();
  j["accuracy"] = accuracy;
  j["positive"] = positive ? class_json(*positive) : nlohmann::json(nullptr);
  j["per_class"] = nlohmann::json::array();
  for (const auto& m : per_class) j["per_class"].push_back(class_json(m));
  j["weighted"] = {{"precision", weighted.precision},
                   {"recall", weighted.recall},
                   {"f1", weighted.f1}};
  j["confusion"] = {{"classes", confusion.classes}, {"counts", confusion.counts}};
  if (roc) {
    nlohmann::json per = nlohmann::json::object();
    for (const auto& c : roc->per_class) per[c.name] = auc_json(c);
    j["roc_auc"] = {{"per_class", per}, {"micro", auc_json(roc->micro)}};
  } else {
    j["roc_auc"] = nullptr;
  }
  return j;
}

std::string confusion_csv(const ConfusionMatrix& cm) {
  std::ostringstream out;
  std::vector<std::string> header{"true\\pred"};
  header.insert(header.end(), cm.classes.begin(), cm.classes.end());
  textio::write_csv_row(out, header);
  for (std::size_t c = 0; c < cm.classes.size(); ++c) {
    std::vector<std::string> row{cm.classes[c]};
    for (std::size_t v : cm.counts[c]) row.push_back(std::to_string(v));
    textio::write_csv_row(out, row);
  }
  return out.str();
}

std::string roc_csv(const RocData& roc) {
  std::ostringstream out;
  textio::write_csv_row(out, {"curve", "threshold", "fpr", "tpr"});
  auto emit = [&](const RocCurve& c) {
    for (const auto& p : c.points) {
      textio::write_csv_row(out, {c.name, textio::format_double(p.threshold),
                                  textio::format_double(p.fpr), textio::format_double(p.tpr)});
    }
  };
  for (const auto& c : roc.per_class) emit(c);
  emit(roc.micro);
  return out.str();
}

// ---------------------------------------------------------------------------

EvalOutcome evaluate_clustering(const Matrix& fit, std::span<const std::size_t> fit_labels,
                                const Matrix& eval, std::span<const std::size_t> eval_labels,
                                const std::vector<std::string>& classes,
                                const ClusterOptions& opts,
                                std::optional<std::size_t> positive_class) {
  if (fit.rows() != fit_labels.size() || eval.rows() != eval_labels.size()) {
    throw InvalidArgument("evaluate_clustering: length mismatch");
  }
  const KMeansResult km = kmeans_embed(fit, classes.size(), opts.seed, opts.max_iter, opts.restarts);
  const ClusterMapping map = map_clusters(km.assignments, fit_labels);
  const auto nearest = nearest_centroid(eval, km.centroids);

  EvalOutcome out;
  out.scores = Matrix(eval.rows(), classes.size());
  out.scores.fill(-std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < eval.rows(); ++i) {
    for (std::size_t c = 0; c < km.centroids.rows(); ++c) {
      const std::size_t l = map.cluster_to_label[c];
      if (l >= classes.size()) continue;
      const double d = std::sqrt(squared_distance(eval.row(i), km.centroids.row(c)));
      out.scores(i, l) = std::max(out.scores(i, l), -d);
    }
    out.predictions.push_back(map.cluster_to_label[nearest[i]]);
  }
  out.report = compute_metrics(eval_labels, out.predictions, classes, positive_class);
  out.report.mode = "clustering";
  out.report.roc = roc_points(out.scores, eval_labels, classes);
  return out;
}

EvalOutcome evaluate_probe(const Matrix& fit, std::span<const std::size_t> fit_labels,
                           const Matrix& eval, std::span<const std::size_t> eval_labels,
                           const std::vector<std::string>& classes, const ProbeOptions& opts,
                           std::optional<std::size_t> positive_class) {
  if (eval.rows() != eval_labels.size()) throw InvalidArgument("evaluate_probe: length mismatch");
  const LinearProbe probe = linear_probe(fit, fit_labels, classes.size(), opts);
  EvalOutcome out;
  out.scores = probe.probabilities(eval);
  out.predictions = probe.predict(eval);
  out.report = compute_metrics(eval_labels, out.predictions, classes, positive_class);
  out.report.mode = "probe";
  out.report.roc = roc_points(out.scores, eval_labels, classes);
  return out;
}

}  // namespace flowcontrast::downeval

// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "flowcontrast/downeval.hpp"
#include "flowcontrast/negat.hpp"
#include "flowcontrast/negsc.hpp"
#include "flowcontrast/pipeline.hpp"
#include "flowcontrast/transport.hpp"
#include "oracles.hpp"

using namespace flowcontrast;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

negsc::Subgraph random_subgraph(std::uint64_t seed) {
  const auto g = oracle::star_with_chords(6, 5, 3, seed);
  negat::EncoderConfig cfg;
  cfg.proj_dim = 6;
  cfg.out_dim = 5;
  cfg.edge_feature_dim = 3;
  const auto enc = negat::EncoderParams::init(cfg, seed + 100);
  const auto z = negat::encode_graph(g, enc);
  numcore::Rng rng(seed);
  return negsc::extract_subgraph(g, &z, 0, 4, rng);
}

flowdata::FlowGraph random_flow_graph(std::size_t n, std::size_t m, std::size_t fe,
                                      std::uint64_t seed) {
  numcore::Rng rng(seed);
  std::vector<std::string> names;
  for (std::size_t i = 0; i < n; ++i) names.push_back("h" + std::to_string(i));
  std::vector<flowdata::FlowEdge> edges;
  for (std::size_t e = 0; e < m; ++e) edges.push_back({rng.index(n), rng.index(n), e});
  return {names, edges, oracle::random_matrix(m, fe, rng)};
}

// --------------------------------------------------------------------------

void gradient_suite(Outcome& o) {
  const pipeline::RunConfig cfg;
  const auto t0 = Clock::now();
  const auto inst = pipeline::make_gradcheck_instance(cfg.gradcheck_seed, cfg.gradcheck_dim);
  const auto r = pipeline::check_loss_gradient(inst, cfg.gradcheck_perturbation);
  const double secs = seconds_since(t0);
  o.detail << "6-node graph, n_s=" << inst.contrast.neighbors << " N=" << inst.contrast.centers
           << " M=" << inst.contrast.negatives << ", " << r.analytic.size()
           << " parameters in " << r.report.blocks.size() << " blocks, max rel error "
           << r.report.global_max_rel_error << ", " << secs << " s";
  o.require(inst.graph.node_count() == 6, "graph has 6 nodes");
  o.require(inst.contrast.neighbors == 2 && inst.contrast.centers == 2 &&
                inst.contrast.negatives == 1,
            "instance sizes");
  o.require(r.report.global_max_rel_error < 1e-4, "max rel error < 1e-4");
  o.require(secs < 30.0, "runtime < 30 s");
}

void ot_oracle_suite(Outcome& o) {
  numcore::Rng rng(2024);
  double worst_gap = 0, worst_res = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = 2 + rng.index(3);
    numcore::Matrix c(m, m);
    for (double& v : c.values()) v = rng.uniform(0, 2);
    const auto mu = negsc::uniform_marginal(m);
    const auto r = negsc::sinkhorn_wd(c, mu, mu, {1e-3, 5000, 1e-9, true});
    const double best = oracle::best_permutation_cost(c);
    worst_gap = std::max(worst_gap, std::abs(r.value - best) / best);
    worst_res = std::max(worst_res, r.plan.marginal_residual);
  }
  o.detail << "20 cost matrices of size 2-4 at eps=1e-3, worst relative gap " << worst_gap
           << ", worst marginal residual " << worst_res;
  o.require(worst_gap <= 0.05, "within 5% of the permutation optimum");
  o.require(worst_res < 1e-6, "marginal residual < 1e-6");
}

void gw_properties(Outcome& o) {
  double worst_self = 0, worst_rise = -INFINITY, worst_scale = 0;
  std::size_t outer = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto a = random_subgraph(seed);
    const auto ra = negsc::node_relations(a);
    const auto mu = negsc::uniform_marginal(ra.node_count);
    worst_self = std::max(worst_self, negsc::gromov_wd(ra, ra, mu, mu, {}).value);

    auto b = random_subgraph(seed + 50);
    const auto rb = negsc::node_relations(b);
    const auto nu = negsc::uniform_marginal(rb.node_count);
    const auto r = negsc::gromov_wd(ra, rb, mu, nu, {});
    outer = std::max(outer, r.objective_trace.size() - 1);
    for (std::size_t k = 1; k < r.objective_trace.size(); ++k) {
      worst_rise = std::max(worst_rise, r.objective_trace[k] - r.objective_trace[k - 1]);
    }

    auto sa = a;
    for (double& v : sa.node_embedding.values()) v *= 3.5;
    for (double& v : b.node_embedding.values()) v *= 0.25;
    const double scaled =
        negsc::gromov_wd(negsc::node_relations(sa), negsc::node_relations(b), mu, nu, {}).value;
    worst_scale = std::max(worst_scale, std::abs(scaled - r.value));
  }
  o.detail << "10 subgraphs: max GWD(S,S) " << worst_self << ", largest objective step "
           << worst_rise << " over " << outer << " outer iterations, scale drift " << worst_scale;
  o.require(worst_self < 0.05, "GWD(S,S) < 0.05");
  o.require(worst_rise <= 1e-9, "objective non-increasing");
  o.require(outer == 10, "10 outer iterations");
  o.require(worst_scale < 1e-6, "scale invariance");
}

void loss_closed_forms(Outcome& o) {
  const double tau = 0.2;
  const std::vector<negsc::PairDistances> zero{{0.0, 0.0}};
  const std::vector<std::vector<negsc::PairDistances>> none{{}};
  const double l0 = negsc::contrastive_loss(zero, none, tau).total;
  const std::vector<negsc::PairDistances> ln2{{tau * std::log(2.0), tau * std::log(2.0)}};
  const double l1 = negsc::contrastive_loss(ln2, none, tau).total;
  const std::vector<negsc::PairDistances> pos{{0.1, 0.2}, {0.3, 0.1}};
  const std::vector<std::vector<negsc::PairDistances>> neg{{{0.0, 0.0}}, {{0.5, 0.0}}};
  const double l2 = negsc::contrastive_loss(pos, neg, tau).total;
  o.detail << "L(0)=" << l0 << ", L(tau ln2)-2ln2=" << (l1 - 2 * std::log(2.0))
           << ", clamped L=" << l2;
  o.require(l0 == 0.0, "L = 0 exactly");
  o.require(std::abs(l1 - 2 * std::log(2.0)) <= 1e-9, "L = 2 ln 2");
  o.require(std::isfinite(l2), "clamp keeps L finite");
}

void metric_suite(Outcome& o) {
  std::vector<std::size_t> truth, pred;
  auto add = [&](std::size_t t, std::size_t p, int n) {
    for (int k = 0; k < n; ++k) truth.push_back(t), pred.push_back(p);
  };
  add(1, 1, 50);
  add(0, 1, 10);
  add(1, 0, 10);
  add(0, 0, 30);
  const auto r = downeval::compute_metrics(truth, pred, {"benign", "attack"}, 1);
  const auto& p = *r.positive;
  auto two = [](double v) { return std::round(v * 100.0) / 100.0; };
  double wf = 0, n = 0;
  for (const auto& c : r.per_class) {
    wf += c.f1 * double(c.support);
    n += double(c.support);
  }
  const std::vector<double> scores{0.9, 0.8, 0.7, 0.2, 0.1};
  const auto roc = downeval::roc_curve(scores, {true, true, true, false, false});
  o.detail << "Acc " << two(r.accuracy) << " P " << two(p.precision) << " R " << two(p.recall)
           << " F1 " << two(p.f1) << ", weighted F1 drift " << std::abs(r.weighted.f1 - wf / n)
           << ", perfect AUC " << roc.auc.value_or(-1);
  o.require(two(r.accuracy) == 80.00, "accuracy 80.00");
  o.require(two(p.precision) == 83.33 && two(p.recall) == 83.33 && two(p.f1) == 83.33,
            "P/R/F1 83.33");
  o.require(std::abs(r.weighted.f1 - wf / n) < 1e-9, "weighted average recomputes");
  o.require(roc.auc && *roc.auc == 1.0, "AUC 1.0");
}

pipeline::RunConfig planted_config(const fs::path& data_dir, const fs::path& out) {
  pipeline::RunConfig c;
  c.out_dir = out.string();
  c.data = {(data_dir / "synth.csv").string()};
  c.schema = (data_dir / "synth.schema").string();
  c.eval_mode = "both";
  return c;
}

void run_chain(const pipeline::RunConfig& c) {
  pipeline::cmd_preprocess(c);
  pipeline::cmd_train(c);
  pipeline::cmd_embed(c, std::nullopt);
  pipeline::cmd_eval(c);
}

fs::path workspace() {
  const auto p = fs::temp_directory_path() / "flowcontrast_acceptance";
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void planted_end_to_end(Outcome& o, const fs::path& root) {
  const auto t0 = Clock::now();
  auto synth = planted_config(root, root);
  pipeline::cmd_synth(synth);
  const auto c = planted_config(root, root / "run_a");
  run_chain(c);
  const double secs = seconds_since(t0);
  auto wf1 = [&](const std::string& mode) {
    const auto j = nlohmann::json::parse(textio::read_file(c.path("metrics_" + mode + ".json")));
    return j.at("weighted").at("f1").get<double>();
  };
  const double cl = wf1("clustering"), pr = wf1("probe");
  const auto split =
      nlohmann::json::parse(textio::read_file(c.path("split.json")));
  o.detail << "C=" << c.synth.classes << " n=" << c.synth.nodes << " m=" << c.synth.edges
           << " separation " << c.synth.separation << ", " << c.contrast.epochs
           << " epochs, held-out " << split.at("test_records").get<std::size_t>()
           << " flows: clustering weighted F1 " << cl << "%, probe weighted F1 " << pr << "%, "
           << secs << " s";
  o.require(c.synth.classes == 3 && c.synth.nodes == 60 && c.synth.edges == 600 &&
                c.synth.separation == 6.0 && c.contrast.epochs <= 30,
            "planted setup");
  o.require(cl >= 90.0, "clustering weighted F1 >= 90%");
  o.require(pr >= 95.0, "probe weighted F1 >= 95%");
  o.require(secs < 180.0, "runtime < 3 min");
}

void complexity(Outcome& o) {
  const std::size_t n = 500, m = 20000;
  negat::EncoderConfig ec;
  ec.edge_feature_dim = 8;
  const auto p = negat::EncoderParams::init(ec, 3);
  auto median_time = [&](const flowdata::FlowGraph& g) {
    std::vector<double> t;
    negat::encode_graph(g, p);  // warm-up
    for (int r = 0; r < 5; ++r) {
      const auto t0 = Clock::now();
      const auto z = negat::encode_graph(g, p);
      t.push_back(seconds_since(t0));
      if (z.nodes.rows() != n) t.back() = INFINITY;
    }
    std::sort(t.begin(), t.end());
    return t[2];
  };
  const double a = median_time(random_flow_graph(n, m, 8, 1));
  const double b = median_time(random_flow_graph(n, 2 * m, 8, 2));
  o.detail << "K=1 I=3, n=" << n << ": median " << a << " s at m=" << m << ", " << b
           << " s at 2m, ratio " << b / a;
  o.require(b / a < 2.5, "ratio < 2.5");
}

void determinism(Outcome& o, const fs::path& root) {
  const auto a = planted_config(root, root / "run_a");
  const auto b = planted_config(root, root / "run_b");
  run_chain(b);
  std::size_t compared = 0;
  for (const char* f : {"loss_trace.csv", "checkpoint.json", "train_embeddings.csv",
                        "test_embeddings.csv", "metrics_clustering.json", "metrics_probe.json",
                        "confusion_clustering.csv", "confusion_probe.csv",
                        "roc_clustering.csv", "roc_probe.csv", "split.json"}) {
    const bool same = textio::read_file(a.path(f)) == textio::read_file(b.path(f));
    o.require(same, std::string(f) + " identical");
    ++compared;
  }
  o.detail << compared << " artifacts compared byte for byte across two runs";
}

void structural(Outcome& o) {
  const auto g = random_flow_graph(40, 300, 5, 9);
  negat::EncoderConfig ec;
  ec.edge_feature_dim = 5;
  const auto p = negat::EncoderParams::init(ec, 4);
  const auto trace = negat::encode_forward(g, p);
  double worst_sum = 0;
  for (std::size_t i = 0; i < ec.heads; ++i) {
    for (std::size_t v = 0; v < g.node_count(); ++v) {
      const auto w = negat::attention_weights(g, p, trace, 0, i, v);
      if (w.empty()) continue;
      double s = 0;
      for (double x : w) s += x;
      worst_sum = std::max(worst_sum, std::abs(s - 1.0));
    }
  }
  const auto& z = trace.embedding;
  const std::size_t d = z.nodes.cols();
  bool concat = z.edges.cols() == 2 * d;
  for (std::size_t e = 0; e < g.edge_count() && concat; ++e) {
    for (std::size_t c = 0; c < d; ++c) {
      concat = concat && z.edges(e, c) == z.nodes(g.edge(e).src, c) &&
               z.edges(e, d + c) == z.nodes(g.edge(e).dst, c);
    }
  }
  const pipeline::RunConfig def;
  o.detail << "attention sum drift " << worst_sum << ", edge concatenation "
           << (concat ? "exact" : "broken") << ", defaults K=" << def.encoder.layers
           << " I=" << def.encoder.heads << " " << def.activation << " " << def.optimizer;
  o.require(worst_sum <= 1e-9, "weights sum to 1");
  o.require(concat, "exact endpoint concatenation");
  o.require(def.encoder.layers == 1 && def.encoder.heads == 3 && def.activation == "relu" &&
                def.optimizer == "adam",
            "shipped defaults");
}

}  // namespace

int main() {
  const auto root = workspace();
  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria{
      {"gradient suite", gradient_suite},
      {"optimal transport oracle", ot_oracle_suite},
      {"Gromov-Wasserstein properties", gw_properties},
      {"loss closed forms", loss_closed_forms},
      {"metric suite", metric_suite},
      {"planted-class end to end", [&](Outcome& o) { planted_end_to_end(o, root); }},
      {"encoder scaling", complexity},
      {"determinism", [&](Outcome& o) { determinism(o, root); }},
      {"structural checks", structural},
  };
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    Outcome o;
    try {
      criteria[k].second(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << " [exception: " << e.what() << "]";
    }
    failed += !o.pass;
    std::printf("%s %zu %s: %s\n", o.pass ? "PASS" : "FAIL", k + 1, criteria[k].first.c_str(),
                o.detail.str().c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}

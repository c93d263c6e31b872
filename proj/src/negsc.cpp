#include "flowcontrast/negsc.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <sstream>

#include "flowcontrast/errors.hpp"
#include "flowcontrast/textio.hpp"

namespace flowcontrast::negsc {

using attention::HeadParams;
using flowdata::FlowGraph;

void ContrastConfig::validate() const {
  if (centers == 0) throw ConfigError("centers must be >= 1");
  if (neighbors == 0) throw ConfigError("neighbors must be >= 1");
  if (negatives >= 1 && centers < 2) throw ConfigError("negatives >= 1 needs centers >= 2");
  if (!(temperature > 0.0)) throw ConfigError("temperature must be > 0");
  if (!(sinkhorn_epsilon > 0.0)) throw ConfigError("sinkhorn_epsilon must be > 0");
  if (sinkhorn_max_iter == 0) throw ConfigError("sinkhorn_max_iter must be >= 1");
  if (!(sinkhorn_tol > 0.0)) throw ConfigError("sinkhorn_tol must be > 0");
  if (generator_proj_dim == 0) throw ConfigError("generator_proj_dim must be >= 1");
  if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be >= 0");
  if (batches_per_epoch == 0) throw ConfigError("batches_per_epoch must be >= 1");
}

// ---------------------------------------------------------------------------

GeneratorParams GeneratorParams::init(std::size_t embedding_dim, std::size_t proj_dim,
                                      std::uint64_t seed) {
  numcore::Rng rng(seed);
  GeneratorParams g;
  g.head = HeadParams::glorot(embedding_dim, 2 * embedding_dim, proj_dim, embedding_dim, rng);
  return g;
}

GeneratorParams GeneratorParams::zeros_like(const GeneratorParams& g) {
  GeneratorParams z;
  z.head = HeadParams::zeros(g.head.node_dim(), g.head.edge_dim(), g.head.proj_dim(),
                             g.head.out_dim());
  z.leaky_slope = g.leaky_slope;
  return z;
}

std::vector<numcore::ParamBlock> GeneratorParams::blocks(std::size_t offset) const {
  std::vector<numcore::ParamBlock> out;
  head.for_each_block([&](const std::string& name, const Matrix& w) {
    out.push_back({"generator." + name, offset, w.size()});
    offset += w.size();
  });
  return out;
}

std::size_t GeneratorParams::parameter_count() const {
  std::size_t n = 0;
  head.for_each_block([&](const std::string&, const Matrix& w) { n += w.size(); });
  return n;
}

std::vector<double> GeneratorParams::flatten() const {
  std::vector<double> flat;
  head.for_each_block([&](const std::string&, const Matrix& w) {
    flat.insert(flat.end(), w.values().begin(), w.values().end());
  });
  return flat;
}

void GeneratorParams::unflatten(std::span<const double> flat) {
  if (flat.size() != parameter_count()) throw InvalidArgument("unflatten: size mismatch");
  std::size_t offset = 0;
  head.for_each_block([&](const std::string&, Matrix& w) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), w.size(), w.values().begin());
    offset += w.size();
  });
}

bool GeneratorParams::all_finite() const {
  bool ok = true;
  head.for_each_block([&](const std::string&, const Matrix& w) { ok = ok && w.all_finite(); });
  return ok;
}

nlohmann::json GeneratorParams::to_json() const {
  return {{"leaky_slope", leaky_slope}, {"head", head.to_json()}};
}

GeneratorParams GeneratorParams::from_json(const nlohmann::json& j) {
  GeneratorParams g;
  g.leaky_slope = j.at("leaky_slope").get<double>();
  g.head = HeadParams::from_json(j.at("head"));
  if (g.head.edge_dim() != 2 * g.head.node_dim() || g.head.out_dim() != g.head.node_dim()) {
    throw InvalidArgument("generator json: head shape is not (d_z, 2 d_z) -> d_z");
  }
  return g;
}

// ---------------------------------------------------------------------------

flowdata::Adjacency Subgraph::adjacency() const {
  return flowdata::Adjacency(nodes.size(), local_edges);
}

std::vector<std::size_t> eligible_centers(const FlowGraph& g, std::size_t neighbors) {
  std::vector<std::size_t> out;
  for (std::size_t v = 0; v < g.node_count(); ++v) {
    if (g.distinct_neighbors(v).size() >= neighbors) out.push_back(v);
  }
  return out;
}

CenterSample sample_centers(const FlowGraph& g, std::size_t count, std::size_t neighbors,
                            numcore::Rng& rng) {
  const auto pool = eligible_centers(g, neighbors);
  if (pool.empty()) {
    throw ConfigError("no node has at least " + std::to_string(neighbors) +
                      " distinct neighbours");
  }
  CenterSample out;
  if (pool.size() < count) {
    out.warnings.push_back("only " + std::to_string(pool.size()) +
                           " eligible centres; using all of them instead of " +
                           std::to_string(count));
    count = pool.size();
  }
  for (std::size_t k : rng.sample_without_replacement(pool.size(), count)) {
    out.centers.push_back(pool[k]);
  }
  return out;
}

void fill_embeddings(Subgraph& sub, const Matrix& z) {
  const std::size_t d = z.cols();
  sub.node_embedding = Matrix(sub.nodes.size(), d);
  for (std::size_t k = 0; k < sub.nodes.size(); ++k) {
    const auto src = z.row(sub.nodes[k]);
    std::copy(src.begin(), src.end(), sub.node_embedding.row(k).begin());
  }
  sub.edge_embedding = Matrix(sub.local_edges.size(), 2 * d);
  for (std::size_t e = 0; e < sub.local_edges.size(); ++e) {
    const auto [a, b] = sub.local_edges[e];
    auto row = sub.edge_embedding.row(e);
    std::copy(sub.node_embedding.row(a).begin(), sub.node_embedding.row(a).end(), row.begin());
    std::copy(sub.node_embedding.row(b).begin(), sub.node_embedding.row(b).end(),
              row.begin() + static_cast<std::ptrdiff_t>(d));
  }
}

Subgraph extract_subgraph(const FlowGraph& g, const negat::GraphEmbedding* emb,
                          std::size_t center, std::size_t neighbors, numcore::Rng& rng) {
  const auto nbrs = g.distinct_neighbors(center);
  if (nbrs.size() < neighbors) {
    throw InvalidArgument("extract_subgraph: centre has too few distinct neighbours");
  }
  Subgraph sub;
  sub.center = center;
  sub.nodes.push_back(center);
  for (std::size_t k : rng.sample_without_replacement(nbrs.size(), neighbors)) {
    sub.nodes.push_back(nbrs[k]);
  }
  std::map<std::size_t, std::size_t> local;
  for (std::size_t k = 0; k < sub.nodes.size(); ++k) local.emplace(sub.nodes[k], k);

  // Induced edges, one representative (lowest edge id) per unordered pair.
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> chosen;
  for (std::size_t v : sub.nodes) {
    for (const auto& inc : g.incident(v)) {
      if (inc.neighbor == v || !local.count(inc.neighbor)) continue;
      const auto key = std::minmax(local.at(v), local.at(inc.neighbor));
      auto [it, inserted] = chosen.emplace(key, inc.edge);
      if (!inserted) it->second = std::min(it->second, inc.edge);
    }
  }
  std::vector<std::size_t> reps;
  for (const auto& [_, e] : chosen) reps.push_back(e);
  std::sort(reps.begin(), reps.end());
  for (std::size_t e : reps) {
    const auto& edge = g.edge(e);
    sub.graph_edges.push_back(e);
    sub.local_edges.emplace_back(local.at(edge.src), local.at(edge.dst));
  }
  if (emb) fill_embeddings(sub, emb->nodes);
  return sub;
}

GeneratedSubgraph generate_contrastive_traced(const Subgraph& sub, const GeneratorParams& gen) {
  if (sub.generated) throw InvalidArgument("generate_contrastive: input is already generated");
  GeneratedSubgraph out;
  out.cache = attention::head_forward(gen.head, sub.node_embedding, sub.edge_embedding,
                                      sub.adjacency(), gen.leaky_slope);
  Subgraph& g = out.subgraph;
  g.center = sub.center;
  g.nodes = sub.nodes;
  g.graph_edges = sub.graph_edges;
  g.local_edges = sub.local_edges;
  g.generated = true;
  g.node_embedding = out.cache.out;
  const std::size_t d = g.node_embedding.cols();
  g.edge_embedding = Matrix(g.local_edges.size(), 2 * d);
  for (std::size_t e = 0; e < g.local_edges.size(); ++e) {
    const auto [a, b] = g.local_edges[e];
    auto row = g.edge_embedding.row(e);
    std::copy(g.node_embedding.row(a).begin(), g.node_embedding.row(a).end(), row.begin());
    std::copy(g.node_embedding.row(b).begin(), g.node_embedding.row(b).end(),
              row.begin() + static_cast<std::ptrdiff_t>(d));
  }
  return out;
}

Subgraph generate_contrastive(const Subgraph& sub, const GeneratorParams& gen) {
  return std::move(generate_contrastive_traced(sub, gen).subgraph);
}

Matrix edge_cost_matrix(const Subgraph& s, const Subgraph& g) {
  if (s.edge_embedding.rows() == 0 || g.edge_embedding.rows() == 0) {
    throw InvalidArgument("edge_cost_matrix: both subgraphs need at least one edge");
  }
  return cosine_cost(s.edge_embedding, g.edge_embedding);
}

RelationGraph node_relations(const Subgraph& sub) {
  RelationGraph r;
  r.node_count = sub.nodes.size();
  for (const auto& [a, b] : sub.local_edges) {
    const double d =
        1.0 - cosine(sub.node_embedding.row(a), sub.node_embedding.row(b));
    r.pairs.push_back({a, b, d});
    r.pairs.push_back({b, a, d});
  }
  return r;
}

// ---------------------------------------------------------------------------

namespace {

constexpr double kLogClamp = 1e-7;

// log(max(1 - exp(-d/tau), clamp)) and its derivative in d
std::pair<double, double> negative_term(double d, double tau) {
  const double e = std::exp(-d / tau);
  const double arg = 1.0 - e;
  if (arg <= kLogClamp) return {std::log(kLogClamp), 0.0};
  return {std::log(arg), e / (tau * arg)};
}

}  // namespace

ContrastTerms contrastive_loss(std::span<const PairDistances> positives,
                               const std::vector<std::vector<PairDistances>>& negatives,
                               double temperature) {
  if (!(temperature > 0.0)) throw InvalidArgument("contrastive_loss: temperature must be > 0");
  if (negatives.size() != positives.size()) {
    throw InvalidArgument("contrastive_loss: one negative list per positive pair");
  }
  if (positives.empty()) throw InvalidArgument("contrastive_loss: no pairs");
  const std::size_t m = negatives.front().size();
  for (const auto& n : negatives) {
    if (n.size() != m) throw InvalidArgument("contrastive_loss: ragged negative lists");
  }
  const double scale = -1.0 / (static_cast<double>(positives.size()) * static_cast<double>(m + 1));

  ContrastTerms t;
  t.positive_grad.resize(positives.size());
  t.negative_grad.resize(positives.size());
  double sum_edges = 0.0, sum_topo = 0.0;
  for (std::size_t i = 0; i < positives.size(); ++i) {
    sum_edges += -positives[i].wd / temperature;
    sum_topo += -positives[i].gwd / temperature;
    t.positive_grad[i] = {-scale / temperature, -scale / temperature};
    t.negative_grad[i].resize(m);
    for (std::size_t k = 0; k < m; ++k) {
      const auto [le, de] = negative_term(negatives[i][k].wd, temperature);
      const auto [lt, dt] = negative_term(negatives[i][k].gwd, temperature);
      sum_edges += le;
      sum_topo += lt;
      t.negative_grad[i][k] = {scale * de, scale * dt};
    }
  }
  t.edges = scale * sum_edges;
  t.topology = scale * sum_topo;
  t.total = t.edges + t.topology;
  return t;
}

// ---------------------------------------------------------------------------

ContrastBatch sample_batch(const FlowGraph& g, const ContrastConfig& cfg, numcore::Rng& rng) {
  cfg.validate();
  ContrastBatch batch;
  auto cs = sample_centers(g, cfg.centers, cfg.neighbors, rng);
  batch.warnings = std::move(cs.warnings);
  for (std::size_t c : cs.centers) {
    batch.sampled.push_back(extract_subgraph(g, nullptr, c, cfg.neighbors, rng));
  }
  const std::size_t n = batch.sampled.size();
  std::size_t m = cfg.negatives;
  if (m > 0 && n < 2) throw ConfigError("negatives need at least 2 eligible centres");
  if (m > n - 1) {
    batch.warnings.push_back("negatives reduced from " + std::to_string(m) + " to " +
                             std::to_string(n - 1));
    m = n - 1;
  }
  batch.negatives.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k : rng.sample_without_replacement(n - 1, m)) {
      batch.negatives[i].push_back(k < i ? k : k + 1);
    }
  }
  return batch;
}

namespace {

struct SubgraphGrad {
  Matrix node;
  Matrix edge;
};

SubgraphGrad zero_grad(const Subgraph& s) {
  return {Matrix(s.node_embedding.rows(), s.node_embedding.cols()),
          Matrix(s.edge_embedding.rows(), s.edge_embedding.cols())};
}

void fold_local_edges(const Subgraph& s, const Matrix& edge_grad, Matrix& node_grad) {
  const std::size_t d = node_grad.cols();
  for (std::size_t e = 0; e < s.local_edges.size(); ++e) {
    const auto [a, b] = s.local_edges[e];
    const auto row = edge_grad.row(e);
    auto ga = node_grad.row(a);
    auto gb = node_grad.row(b);
    for (std::size_t c = 0; c < d; ++c) {
      ga[c] += row[c];
      gb[c] += row[d + c];
    }
  }
}

// Gradient of coef * <T, C(S, G)> w.r.t. both edge embedding sets.
void accumulate_wd(const Subgraph& s, const Subgraph& g, const Matrix& plan, double coef,
                   SubgraphGrad& gs, SubgraphGrad& gg) {
  for (std::size_t i = 0; i < s.edge_embedding.rows(); ++i) {
    for (std::size_t j = 0; j < g.edge_embedding.rows(); ++j) {
      cosine_grad_accumulate(s.edge_embedding.row(i), g.edge_embedding.row(j),
                             -coef * plan(i, j), gs.edge.row(i), gg.edge.row(j));
    }
  }
}

void accumulate_relations(const Subgraph& sub, const RelationGraph& rel,
                          const std::vector<double>& dist_grad, double coef, SubgraphGrad& out) {
  for (std::size_t k = 0; k < rel.pairs.size(); ++k) {
    const auto& p = rel.pairs[k];
    cosine_grad_accumulate(sub.node_embedding.row(p.a), sub.node_embedding.row(p.b),
                           -coef * dist_grad[k], out.node.row(p.a), out.node.row(p.b));
  }
}

}  // namespace

LossEvaluation evaluate_loss(const FlowGraph& graph, const negat::EncoderParams& enc,
                             const GeneratorParams& gen, const ContrastBatch& batch,
                             const ContrastConfig& cfg, const FrozenPlans* frozen,
                             bool want_grad) {
  const std::size_t n = batch.sampled.size();
  if (n == 0) throw InvalidArgument("evaluate_loss: empty batch");
  const negat::EncoderTrace trace = negat::encode_forward(graph, enc);
  const Matrix& z = trace.embedding.nodes;

  std::vector<Subgraph> sampled = batch.sampled;
  std::vector<GeneratedSubgraph> generated;
  generated.reserve(n);
  for (auto& s : sampled) {
    fill_embeddings(s, z);
    generated.push_back(generate_contrastive_traced(s, gen));
  }

  // Pair order: (i, i) then (i, negatives[i][k]).
  struct Pair {
    std::size_t s, g;
  };
  std::vector<Pair> pairs;
  for (std::size_t i = 0; i < n; ++i) {
    pairs.push_back({i, i});
    for (std::size_t k : batch.negatives[i]) pairs.push_back({i, k});
  }
  if (frozen && (frozen->wd.size() != pairs.size() || frozen->gw.size() != pairs.size())) {
    throw InvalidArgument("evaluate_loss: frozen plans do not match batch");
  }

  LossEvaluation ev;
  std::vector<PairDistances> dist(pairs.size());
  std::vector<RelationGraph> rel_s(n), rel_g(n);
  for (std::size_t i = 0; i < n; ++i) {
    rel_s[i] = node_relations(sampled[i]);
    rel_g[i] = node_relations(generated[i].subgraph);
  }
  const SinkhornOptions sk = cfg.sinkhorn();
  const GwOptions gw = cfg.gromov();
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const Subgraph& s = sampled[pairs[p].s];
    const Subgraph& g = generated[pairs[p].g].subgraph;
    const Matrix cost = edge_cost_matrix(s, g);
    const auto& rs = rel_s[pairs[p].s];
    const auto& rg = rel_g[pairs[p].g];
    if (frozen) {
      const Matrix& t = frozen->wd[p];
      double wd = 0.0;
      for (std::size_t i = 0; i < cost.rows(); ++i) {
        for (std::size_t j = 0; j < cost.cols(); ++j) wd += t(i, j) * cost(i, j);
      }
      dist[p] = {wd, gw_objective(rs, rg, frozen->gw[p])};
      ev.plans.wd.push_back(t);
      ev.plans.gw.push_back(frozen->gw[p]);
    } else {
      const auto mu_e = uniform_marginal(cost.rows());
      const auto nu_e = uniform_marginal(cost.cols());
      OtResult wd = sinkhorn_wd(cost, mu_e, nu_e, sk);
      const auto mu_n = uniform_marginal(rs.node_count);
      const auto nu_n = uniform_marginal(rg.node_count);
      GwResult gwr = gromov_wd(rs, rg, mu_n, nu_n, gw);
      ev.transport_converged = ev.transport_converged && wd.plan.converged && gwr.converged;
      ev.worst_marginal_residual =
          std::max({ev.worst_marginal_residual, wd.plan.marginal_residual,
                    gwr.plan.marginal_residual});
      dist[p] = {wd.value, gwr.value};
      ev.plans.wd.push_back(std::move(wd.plan.plan));
      ev.plans.gw.push_back(std::move(gwr.plan.plan));
    }
  }

  std::size_t p = 0;
  ev.positives.resize(n);
  ev.negatives.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    ev.positives[i] = dist[p++];
    for (std::size_t k = 0; k < batch.negatives[i].size(); ++k) ev.negatives[i].push_back(dist[p++]);
  }
  ev.terms = contrastive_loss(ev.positives, ev.negatives, cfg.temperature);
  if (!want_grad) return ev;

  // Backward with plans held fixed.
  std::vector<SubgraphGrad> gs, gg;
  for (std::size_t i = 0; i < n; ++i) {
    gs.push_back(zero_grad(sampled[i]));
    gg.push_back(zero_grad(generated[i].subgraph));
  }
  p = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k <= batch.negatives[i].size(); ++k, ++p) {
      const PairDistances coef =
          k == 0 ? ev.terms.positive_grad[i] : ev.terms.negative_grad[i][k - 1];
      const std::size_t si = pairs[p].s, gi = pairs[p].g;
      if (coef.wd != 0.0) {
        accumulate_wd(sampled[si], generated[gi].subgraph, ev.plans.wd[p], coef.wd, gs[si], gg[gi]);
      }
      if (coef.gwd != 0.0) {
        std::vector<double> ds, dg;
        gw_distance_gradients(rel_s[si], rel_g[gi], ev.plans.gw[p], ds, dg);
        accumulate_relations(sampled[si], rel_s[si], ds, coef.gwd, gs[si]);
        accumulate_relations(generated[gi].subgraph, rel_g[gi], dg, coef.gwd, gg[gi]);
      }
    }
  }

  GeneratorParams gen_grad = GeneratorParams::zeros_like(gen);
  Matrix dz(z.rows(), z.cols());
  for (std::size_t i = 0; i < n; ++i) {
    const Subgraph& s = sampled[i];
    Matrix d_hat = gg[i].node;
    fold_local_edges(generated[i].subgraph, gg[i].edge, d_hat);
    attention::head_backward(gen.head, s.node_embedding, s.edge_embedding, s.adjacency(),
                             generated[i].cache, d_hat, gen.leaky_slope, gen_grad.head,
                             &gs[i].node, &gs[i].edge);
    fold_local_edges(s, gs[i].edge, gs[i].node);
    for (std::size_t k = 0; k < s.nodes.size(); ++k) {
      auto dst = dz.row(s.nodes[k]);
      const auto src = gs[i].node.row(k);
      for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
    }
  }
  ev.encoder_grad = negat::encode_backward(graph, enc, trace, dz);
  ev.generator_grad = std::move(gen_grad);
  return ev;
}

// ---------------------------------------------------------------------------

TrainResult train(const FlowGraph& g, negat::EncoderParams encoder, GeneratorParams generator,
                  const ContrastConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  if (eligible_centers(g, cfg.neighbors).empty()) {
    throw ConfigError("no eligible centres for neighbors = " + std::to_string(cfg.neighbors));
  }
  numcore::Rng rng(cfg.seed);
  numcore::AdamConfig adam{cfg.learning_rate};
  numcore::AdamState enc_state(encoder.parameter_count(), adam);
  numcore::AdamState gen_state(generator.parameter_count(), adam);

  TrainResult result;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    EpochRecord rec;
    rec.epoch = epoch;
    for (std::size_t b = 0; b < cfg.batches_per_epoch; ++b) {
      ContrastBatch batch = sample_batch(g, cfg, rng);
      if (epoch == 0 && b == 0) result.warnings = batch.warnings;
      LossEvaluation ev = evaluate_loss(g, encoder, generator, batch, cfg, nullptr, true);
      if (!std::isfinite(ev.terms.total)) {
        std::ostringstream msg;
        msg << "non-finite loss at epoch " << epoch << " batch " << b
            << ": L_edges=" << ev.terms.edges << " L_topology=" << ev.terms.topology;
        throw NumericError(msg.str());
      }
      rec.loss += ev.terms.total;
      rec.loss_edges += ev.terms.edges;
      rec.loss_topology += ev.terms.topology;

      auto ep = encoder.flatten();
      numcore::adam_step(ep, ev.encoder_grad->flatten(), enc_state);
      encoder.unflatten(ep);
      auto gp = generator.flatten();
      numcore::adam_step(gp, ev.generator_grad->flatten(), gen_state);
      generator.unflatten(gp);
      if (!encoder.all_finite() || !generator.all_finite()) {
        throw NumericError("non-finite parameters after update at epoch " + std::to_string(epoch));
      }
    }
    const double nb = static_cast<double>(cfg.batches_per_epoch);
    rec.loss /= nb;
    rec.loss_edges /= nb;
    rec.loss_topology /= nb;
    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.trace.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  result.encoder = std::move(encoder);
  result.generator = std::move(generator);
  return result;
}

std::string loss_trace_csv(const std::vector<EpochRecord>& trace) {
  std::ostringstream out;
  out << "epoch,loss,loss_edges,loss_topology\n";
  for (const auto& r : trace) {
    out << r.epoch << ',' << textio::format_double(r.loss) << ','
        << textio::format_double(r.loss_edges) << ',' << textio::format_double(r.loss_topology)
        << '\n';
  }
  return out.str();
}

}  // namespace flowcontrast::negsc

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "flowcontrast/attention.hpp"
#include "flowcontrast/flowdata.hpp"
#include "flowcontrast/negat.hpp"
#include "flowcontrast/transport.hpp"

// Generative subgraph contrast: 1-hop subgraphs around sampled centres, an
// attention generator that interpolates a partner subgraph for each, and a
// contrastive loss built from the Wasserstein distance between edge
// embeddings and the Gromov-Wasserstein distance between node-pair structure.
namespace flowcontrast::negsc {

struct ContrastConfig {
  std::size_t centers = 64;    // N
  std::size_t neighbors = 4;   // n_s
  std::size_t negatives = 5;   // M
  double temperature = 0.2;    // tau
  double sinkhorn_epsilon = 0.05;
  std::size_t sinkhorn_max_iter = 200;
  double sinkhorn_tol = 1e-9;
  std::size_t gw_outer_iter = 10;
  std::size_t generator_proj_dim = 32;
  double learning_rate = 1e-3;
  std::size_t epochs = 30;
  std::size_t batches_per_epoch = 1;
  std::uint64_t seed = 1;

  void validate() const;
  SinkhornOptions sinkhorn() const { return {sinkhorn_epsilon, sinkhorn_max_iter, sinkhorn_tol}; }
  GwOptions gromov() const { return {sinkhorn(), gw_outer_iter}; }
};

/// Attention head mapping (z_v, z_vu, z_u) onto interpolated node embeddings.
struct GeneratorParams {
  attention::HeadParams head;  // d_node = d_z, d_edge = 2 d_z, d_out = d_z
  double leaky_slope = 0.2;

  static GeneratorParams init(std::size_t embedding_dim, std::size_t proj_dim,
                              std::uint64_t seed);
  static GeneratorParams zeros_like(const GeneratorParams& g);

  std::vector<numcore::ParamBlock> blocks(std::size_t offset = 0) const;
  std::size_t parameter_count() const;
  std::vector<double> flatten() const;
  void unflatten(std::span<const double> flat);
  bool all_finite() const;

  nlohmann::json to_json() const;
  static GeneratorParams from_json(const nlohmann::json& j);
  bool operator==(const GeneratorParams&) const = default;
};

struct Subgraph {
  std::size_t center = 0;
  std::vector<std::size_t> nodes;        // graph node ids; nodes[0] is the centre
  std::vector<std::size_t> graph_edges;  // representative graph edge per local edge
  std::vector<std::pair<std::size_t, std::size_t>> local_edges;  // stored orientation
  Matrix node_embedding;                 // |nodes| x d_z
  Matrix edge_embedding;                 // |edges| x 2 d_z
  bool generated = false;

  flowdata::Adjacency adjacency() const;
};

/// Distinct neighbour count needed for a centre: n_s.
std::vector<std::size_t> eligible_centers(const flowdata::FlowGraph& g, std::size_t neighbors);

struct CenterSample {
  std::vector<std::size_t> centers;
  std::vector<std::string> warnings;
};

/// N distinct eligible centres, uniform without replacement. Shrinks N with a
/// warning when too few nodes qualify; throws ConfigError when none do.
CenterSample sample_centers(const flowdata::FlowGraph& g, std::size_t count,
                            std::size_t neighbors, numcore::Rng& rng);

/// Centre plus n_s sampled distinct neighbours, with every graph edge among
/// them. Parallel edges collapse to the lowest-id representative; self-loops
/// are dropped. Embeddings are copied from `emb` when given.
Subgraph extract_subgraph(const flowdata::FlowGraph& g, const negat::GraphEmbedding* emb,
                          std::size_t center, std::size_t neighbors, numcore::Rng& rng);

/// Rebuilds a subgraph's embedding copies from fresh node embeddings.
void fill_embeddings(Subgraph& sub, const Matrix& node_embedding);

struct GeneratedSubgraph {
  Subgraph subgraph;
  attention::HeadCache cache;
};

GeneratedSubgraph generate_contrastive_traced(const Subgraph& sub, const GeneratorParams& gen);
Subgraph generate_contrastive(const Subgraph& sub, const GeneratorParams& gen);

/// 1 - cosine between sampled and generated edge embeddings.
Matrix edge_cost_matrix(const Subgraph& s, const Subgraph& g);

/// Ordered node pairs over the subgraph's edges (both orientations) with
/// 1 - cosine distances between node embeddings.
RelationGraph node_relations(const Subgraph& sub);

// ---------------------------------------------------------------------------

struct PairDistances {
  double wd = 0.0;
  double gwd = 0.0;
};

struct ContrastTerms {
  double total = 0.0;
  double edges = 0.0;
  double topology = 0.0;
  // dL / d distance for each positive and negative pair
  std::vector<PairDistances> positive_grad;
  std::vector<std::vector<PairDistances>> negative_grad;
};

/// L_edges + L_topology with
///   L_x = -1/(N(M+1)) * sum_i [ -d_x(S_i,G_i)/tau + sum_n log(max(1 - exp(-d_x(S_i,G_n)/tau), 1e-7)) ]
ContrastTerms contrastive_loss(std::span<const PairDistances> positives,
                               const std::vector<std::vector<PairDistances>>& negatives,
                               double temperature);

// ---------------------------------------------------------------------------

/// Sampling decisions for one optimisation step, fixed so losses are
/// re-evaluable at perturbed parameters.
struct ContrastBatch {
  std::vector<Subgraph> sampled;                // structure only
  std::vector<std::vector<std::size_t>> negatives;  // indices of other generated subgraphs
  std::vector<std::string> warnings;
};

ContrastBatch sample_batch(const flowdata::FlowGraph& g, const ContrastConfig& cfg,
                           numcore::Rng& rng);

/// Transport plans per (sampled, generated) pair in evaluation order.
struct FrozenPlans {
  std::vector<Matrix> wd;
  std::vector<Matrix> gw;
};

struct LossEvaluation {
  ContrastTerms terms;
  std::vector<PairDistances> positives;
  std::vector<std::vector<PairDistances>> negatives;
  FrozenPlans plans;
  bool transport_converged = true;
  double worst_marginal_residual = 0.0;
  std::optional<negat::EncoderParams> encoder_grad;
  std::optional<GeneratorParams> generator_grad;
};

/// Forward pass of the full objective. With `frozen` the stored plans are
/// reused instead of re-solving transport. With `want_grad` the plan-fixed
/// gradient is returned for both parameter sets.
LossEvaluation evaluate_loss(const flowdata::FlowGraph& g, const negat::EncoderParams& enc,
                             const GeneratorParams& gen, const ContrastBatch& batch,
                             const ContrastConfig& cfg, const FrozenPlans* frozen,
                             bool want_grad);

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;
  double loss_edges = 0.0;
  double loss_topology = 0.0;
  double wall_seconds = 0.0;  // not part of the deterministic trace
};

struct TrainResult {
  negat::EncoderParams encoder;
  GeneratorParams generator;
  std::vector<EpochRecord> trace;
  std::vector<std::string> warnings;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

TrainResult train(const flowdata::FlowGraph& g, negat::EncoderParams encoder,
                  GeneratorParams generator, const ContrastConfig& cfg,
                  const EpochCallback& on_epoch = {});

/// Deterministic CSV: epoch,loss,loss_edges,loss_topology.
std::string loss_trace_csv(const std::vector<EpochRecord>& trace);

}  // namespace flowcontrast::negsc

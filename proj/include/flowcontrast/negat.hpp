#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "flowcontrast/attention.hpp"
#include "flowcontrast/flowdata.hpp"
#include "flowcontrast/numcore.hpp"

// Edge-featured graph attention encoder. Each layer runs `heads` attention
// heads over every node's incident flows and concatenates their outputs.
// Raw edge features feed every layer; only node states are updated. Final
// node states are the node embeddings, and each edge embedding is the
// concatenation of its endpoints' embeddings in stored (src, dst) order.
namespace flowcontrast::negat {

using numcore::Matrix;

struct EncoderConfig {
  std::size_t layers = 1;
  std::size_t heads = 3;
  std::size_t proj_dim = 32;
  std::size_t out_dim = 32;
  std::size_t node_feature_dim = 1;
  std::size_t edge_feature_dim = 0;
  double leaky_slope = 0.2;

  std::size_t embedding_dim() const { return heads * out_dim; }
  std::size_t layer_input_dim(std::size_t layer) const {
    return layer == 0 ? node_feature_dim : heads * out_dim;
  }
  bool operator==(const EncoderConfig&) const = default;
};

struct EncoderParams {
  EncoderConfig config;
  std::vector<std::vector<attention::HeadParams>> layers;  // [layer][head]

  static EncoderParams init(const EncoderConfig& cfg, std::uint64_t seed);
  static EncoderParams zeros_like(const EncoderParams& p);

  std::vector<numcore::ParamBlock> blocks() const;
  std::size_t parameter_count() const;
  std::vector<double> flatten() const;
  void unflatten(std::span<const double> flat);
  bool all_finite() const;

  nlohmann::json to_json() const;
  static EncoderParams from_json(const nlohmann::json& j);
  bool operator==(const EncoderParams&) const = default;
};

struct GraphEmbedding {
  Matrix nodes;  // n x d_z
  Matrix edges;  // m x 2*d_z
};

/// Everything needed to run the encoder backward.
struct EncoderTrace {
  std::vector<Matrix> layer_inputs;                    // node states entering each layer
  std::vector<std::vector<attention::HeadCache>> caches;  // [layer][head]
  GraphEmbedding embedding;
};

EncoderTrace encode_forward(const flowdata::FlowGraph& g, const EncoderParams& p);
GraphEmbedding encode_graph(const flowdata::FlowGraph& g, const EncoderParams& p);

/// Edge embeddings z_v || z_u for every edge, from node embeddings.
Matrix edge_embeddings(const flowdata::FlowGraph& g, const Matrix& node_embedding);

/// Folds a gradient on edge embeddings back onto node embeddings.
void fold_edge_gradient(const flowdata::FlowGraph& g, const Matrix& edge_grad, Matrix& node_grad);

/// Gradient of a scalar w.r.t. every parameter given its gradient w.r.t. the
/// final node embeddings.
EncoderParams encode_backward(const flowdata::FlowGraph& g, const EncoderParams& p,
                              const EncoderTrace& trace, const Matrix& node_embedding_grad);

// Per-node views of one layer/head, evaluated on the node states that enter
// `layer` during a forward pass.
double attention_logit(const flowdata::FlowGraph& g, const EncoderParams& p,
                       const EncoderTrace& trace, std::size_t layer, std::size_t head,
                       std::size_t v, std::size_t incidence);
std::vector<double> attention_weights(const flowdata::FlowGraph& g, const EncoderParams& p,
                                      const EncoderTrace& trace, std::size_t layer,
                                      std::size_t head, std::size_t v);
/// Concatenated head outputs for node v at `layer`.
std::vector<double> aggregate_node(const flowdata::FlowGraph& g, const EncoderParams& p,
                                   const EncoderTrace& trace, std::size_t layer, std::size_t v);

}  // namespace flowcontrast::negat

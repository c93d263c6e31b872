#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "flowcontrast/flowdata.hpp"
#include "flowcontrast/numcore.hpp"

// Edge-featured attention head shared by the encoder layers and the subgraph
// generator. For node v and each incident edge e = (v, u):
//
//   s_e     = a . (W_n h_v || W_e x_e || W_n h_u)
//   alpha   = softmax over v's incidences of leaky_relu(s_e)
//   out_v   = relu( sum_e alpha_e * M (h_v || x_e || h_u) )
//
// Nodes without incidences produce relu(0) = 0.
namespace flowcontrast::attention {

using numcore::Matrix;

struct HeadParams {
  Matrix node_proj;  // d_proj x d_node
  Matrix edge_proj;  // d_proj x d_edge
  Matrix attn;       // 1 x 3*d_proj, blocks: self | edge | neighbour
  Matrix message;    // d_out x (2*d_node + d_edge), blocks: self | edge | neighbour

  static HeadParams zeros(std::size_t d_node, std::size_t d_edge, std::size_t d_proj,
                          std::size_t d_out);
  static HeadParams glorot(std::size_t d_node, std::size_t d_edge, std::size_t d_proj,
                           std::size_t d_out, numcore::Rng& rng);

  std::size_t node_dim() const { return node_proj.cols(); }
  std::size_t edge_dim() const { return edge_proj.cols(); }
  std::size_t proj_dim() const { return node_proj.rows(); }
  std::size_t out_dim() const { return message.rows(); }

  void for_each_block(const std::function<void(const std::string&, Matrix&)>& f);
  void for_each_block(const std::function<void(const std::string&, const Matrix&)>& f) const;
  bool operator==(const HeadParams&) const = default;

  nlohmann::json to_json() const;
  static HeadParams from_json(const nlohmann::json& j);
};

/// Intermediate values of one head over a whole node set, kept for backward.
struct HeadCache {
  Matrix proj_node;                  // n x d_proj
  Matrix proj_edge;                  // m x d_proj
  std::vector<double> score_self;    // n
  std::vector<double> score_nbr;     // n
  std::vector<double> score_edge;    // m
  Matrix msg_self;                   // n x d_out
  Matrix msg_nbr;                    // n x d_out
  Matrix msg_edge;                   // m x d_out
  std::vector<double> raw_score;     // per incidence, before leaky_relu
  std::vector<double> alpha;         // per incidence
  Matrix pre;                        // n x d_out
  Matrix out;                        // n x d_out
};

/// Single-incidence logit leaky_relu(a . (W_n h_v || W_e x_e || W_n h_u)).
double attention_logit(const HeadParams& p, std::span<const double> h_v,
                       std::span<const double> x_e, std::span<const double> h_u,
                       double leaky_slope);

/// Reference per-node forms, used to cross-check the batched pass.
std::vector<double> attention_weights(const HeadParams& p, const Matrix& node_states,
                                      const Matrix& edge_feats,
                                      const flowdata::Adjacency& adj, std::size_t v,
                                      double leaky_slope);
std::vector<double> aggregate_node(const HeadParams& p, const Matrix& node_states,
                                   const Matrix& edge_feats, const flowdata::Adjacency& adj,
                                   std::size_t v, double leaky_slope);

HeadCache head_forward(const HeadParams& p, const Matrix& node_states, const Matrix& edge_feats,
                       const flowdata::Adjacency& adj, double leaky_slope);

/// Accumulates parameter gradients into `param_grad` and, when non-null,
/// input gradients into `node_grad` / `edge_grad`.
void head_backward(const HeadParams& p, const Matrix& node_states, const Matrix& edge_feats,
                   const flowdata::Adjacency& adj, const HeadCache& cache,
                   const Matrix& out_grad, double leaky_slope, HeadParams& param_grad,
                   Matrix* node_grad, Matrix* edge_grad);

}  // namespace flowcontrast::attention

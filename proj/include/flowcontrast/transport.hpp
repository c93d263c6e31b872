#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "flowcontrast/numcore.hpp"

// Entropic optimal transport between subgraph embeddings: Sinkhorn for the
// Wasserstein distance over edges and a proximal alternating scheme for the
// Gromov-Wasserstein distance over node-pair structure.
namespace flowcontrast::negsc {

using numcore::Matrix;

/// cos(a, b); zero vectors give 0.
double cosine(std::span<const double> a, std::span<const double> b);
/// Accumulates scale * d cos(a, b) / da into grad_a (and / db into grad_b).
void cosine_grad_accumulate(std::span<const double> a, std::span<const double> b, double scale,
                            std::span<double> grad_a, std::span<double> grad_b);

/// C[i][j] = 1 - cos(a_i, b_j), entries in [0, 2].
Matrix cosine_cost(const Matrix& a, const Matrix& b);

struct SinkhornOptions {
  double epsilon = 0.05;
  std::size_t max_iter = 200;
  double tol = 1e-9;  // max absolute marginal deviation
  /// Start from a large regularizer and shrink it geometrically to `epsilon`.
  bool anneal = false;
  /// Newton steps on the dual once the scaling iterations stop short of `tol`.
  std::size_t newton_steps = 20;
};

struct TransportPlan {
  Matrix cost;
  std::vector<double> mu;
  std::vector<double> nu;
  Matrix plan;
  double epsilon = 0.0;
  std::size_t iterations = 0;
  double marginal_residual = 0.0;
  bool converged = false;
};

struct OtResult {
  double value = 0.0;  // <T, C>, regularizer excluded
  TransportPlan plan;
};

std::vector<double> uniform_marginal(std::size_t n);

/// Log-domain scaling iterations. Throws NumericError if the potentials go NaN.
OtResult sinkhorn_wd(const Matrix& cost, std::span<const double> mu, std::span<const double> nu,
                     const SinkhornOptions& opts);

/// Max absolute deviation of plan row/column sums from the marginals.
double marginal_residual(const Matrix& plan, std::span<const double> mu,
                         std::span<const double> nu);

// ---------------------------------------------------------------------------

/// Ordered node pair (a, b) of one subgraph together with its intra-subgraph
/// distance. Undirected edges are listed in both orientations.
struct Relation {
  std::size_t a = 0;
  std::size_t b = 0;
  double distance = 0.0;
};

struct RelationGraph {
  std::size_t node_count = 0;
  std::vector<Relation> pairs;
};

struct GwOptions {
  SinkhornOptions inner;
  std::size_t outer_iter = 10;
  /// Regularizer doublings tried when a proximal step fails to decrease the objective.
  std::size_t max_backtracks = 8;
};

struct GwResult {
  double value = 0.0;  // sum T_vv' T_uu' |d_vu - d_v'u'|
  TransportPlan plan;
  std::vector<double> objective_trace;  // initial coupling, then one entry per outer iteration
  std::vector<double> inner_residuals;  // marginal residual of every accepted inner solve
  bool converged = true;
};

/// sum over (v,u) in s, (v',u') in g of T[v][v'] T[u][u'] |d(v,u) - d(v',u')|
double gw_objective(const RelationGraph& s, const RelationGraph& g, const Matrix& plan);

/// L[v][v'] = sum over (v,u) in s, (v',u') in g of T[u][u'] |d(v,u) - d(v',u')|.
/// The objective's gradient w.r.t. the plan is 2L.
Matrix gw_linearized_cost(const RelationGraph& s, const RelationGraph& g, const Matrix& plan);

/// Starting from the product coupling, each outer iteration solves the
/// KL-proximal linearized problem with Sinkhorn. A step that would raise the
/// objective is retried with a doubled regularizer and dropped if none helps,
/// so objective_trace never increases.
GwResult gromov_wd(const RelationGraph& s, const RelationGraph& g, std::span<const double> mu,
                   std::span<const double> nu, const GwOptions& opts);

/// With the plan held fixed: d objective / d distance for every pair of s and g.
void gw_distance_gradients(const RelationGraph& s, const RelationGraph& g, const Matrix& plan,
                           std::vector<double>& grad_s, std::vector<double>& grad_g);

}  // namespace flowcontrast::negsc

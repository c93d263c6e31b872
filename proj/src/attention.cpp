#include "flowcontrast/attention.hpp"

#include <cmath>

#include "flowcontrast/errors.hpp"

namespace flowcontrast::attention {

namespace {

using Span = std::span<const double>;

// dot of a slice of row r of w (columns [c0, c0 + x.size())) with x
double row_block_dot(const Matrix& w, std::size_t r, std::size_t c0, Span x) {
  return numcore::dot(w.row(r).subspan(c0, x.size()), x);
}

// y = W[:, c0:c0+x.size()] x
void block_matvec(const Matrix& w, std::size_t c0, Span x, std::span<double> y) {
  for (std::size_t r = 0; r < w.rows(); ++r) y[r] = row_block_dot(w, r, c0, x);
}

// x_grad += W[:, c0:..]^T y_grad
void block_matvec_t_acc(const Matrix& w, std::size_t c0, Span y_grad, std::span<double> x_grad) {
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const double g = y_grad[r];
    if (g == 0.0) continue;
    const auto row = w.row(r);
    for (std::size_t c = 0; c < x_grad.size(); ++c) x_grad[c] += g * row[c0 + c];
  }
}

// W_grad[:, c0:..] += y_grad x^T
void block_outer_acc(Matrix& w_grad, std::size_t c0, Span y_grad, Span x) {
  for (std::size_t r = 0; r < w_grad.rows(); ++r) {
    const double g = y_grad[r];
    if (g == 0.0) continue;
    auto row = w_grad.row(r);
    for (std::size_t c = 0; c < x.size(); ++c) row[c0 + c] += g * x[c];
  }
}

Span attn_block(const HeadParams& p, std::size_t block) {
  const std::size_t d = p.proj_dim();
  return p.attn.row(0).subspan(block * d, d);
}

void check_shapes(const HeadParams& p, const Matrix& nodes, const Matrix& edges,
                  const flowdata::Adjacency& adj) {
  if (nodes.cols() != p.node_dim() || edges.cols() != p.edge_dim() ||
      nodes.rows() != adj.node_count()) {
    throw InvalidArgument("attention head: input dimension mismatch");
  }
  if (p.attn.rows() != 1 || p.attn.cols() != 3 * p.proj_dim() ||
      p.edge_proj.rows() != p.proj_dim() ||
      p.message.cols() != 2 * p.node_dim() + p.edge_dim()) {
    throw InvalidArgument("attention head: parameter shape mismatch");
  }
}

}  // namespace

HeadParams HeadParams::zeros(std::size_t d_node, std::size_t d_edge, std::size_t d_proj,
                             std::size_t d_out) {
  return {Matrix(d_proj, d_node), Matrix(d_proj, d_edge), Matrix(1, 3 * d_proj),
          Matrix(d_out, 2 * d_node + d_edge)};
}

HeadParams HeadParams::glorot(std::size_t d_node, std::size_t d_edge, std::size_t d_proj,
                              std::size_t d_out, numcore::Rng& rng) {
  HeadParams p = zeros(d_node, d_edge, d_proj, d_out);
  numcore::glorot_uniform(p.node_proj, rng);
  numcore::glorot_uniform(p.edge_proj, rng);
  numcore::glorot_uniform(p.attn, rng);
  numcore::glorot_uniform(p.message, rng);
  return p;
}

void HeadParams::for_each_block(const std::function<void(const std::string&, Matrix&)>& f) {
  f("node_proj", node_proj);
  f("edge_proj", edge_proj);
  f("attn", attn);
  f("message", message);
}

void HeadParams::for_each_block(
    const std::function<void(const std::string&, const Matrix&)>& f) const {
  f("node_proj", node_proj);
  f("edge_proj", edge_proj);
  f("attn", attn);
  f("message", message);
}

nlohmann::json HeadParams::to_json() const {
  nlohmann::json blocks = nlohmann::json::object();
  for_each_block([&](const std::string& name, const Matrix& w) {
    blocks[name] = {{"rows", w.rows()}, {"cols", w.cols()},
                    {"data", std::vector<double>(w.values().begin(), w.values().end())}};
  });
  return blocks;
}

HeadParams HeadParams::from_json(const nlohmann::json& j) {
  HeadParams p;
  p.for_each_block([&](const std::string& name, Matrix& w) {
    const auto& b = j.at(name);
    w = Matrix(b.at("rows").get<std::size_t>(), b.at("cols").get<std::size_t>());
    const auto data = b.at("data").get<std::vector<double>>();
    if (data.size() != w.size()) throw InvalidArgument("HeadParams json: block '" + name + "' size mismatch");
    std::copy(data.begin(), data.end(), w.values().begin());
  });
  if (p.attn.cols() != 3 * p.proj_dim() || p.message.cols() != 2 * p.node_dim() + p.edge_dim()) {
    throw InvalidArgument("HeadParams json: inconsistent shapes");
  }
  return p;
}

double attention_logit(const HeadParams& p, Span h_v, Span x_e, Span h_u, double leaky_slope) {
  if (h_v.size() != p.node_dim() || h_u.size() != p.node_dim() || x_e.size() != p.edge_dim()) {
    throw InvalidArgument("attention_logit: dimension mismatch");
  }
  std::vector<double> pv(p.proj_dim()), pu(p.proj_dim()), qe(p.proj_dim());
  numcore::matvec(p.node_proj, h_v, pv);
  numcore::matvec(p.node_proj, h_u, pu);
  numcore::matvec(p.edge_proj, x_e, qe);
  const double s = numcore::dot(attn_block(p, 0), pv) + numcore::dot(attn_block(p, 1), qe) +
                   numcore::dot(attn_block(p, 2), pu);
  return numcore::leaky_relu(s, leaky_slope);
}

std::vector<double> attention_weights(const HeadParams& p, const Matrix& node_states,
                                      const Matrix& edge_feats, const flowdata::Adjacency& adj,
                                      std::size_t v, double leaky_slope) {
  check_shapes(p, node_states, edge_feats, adj);
  const auto inc = adj.incident(v);
  if (inc.empty()) return {};
  std::vector<double> logits;
  logits.reserve(inc.size());
  for (const auto& i : inc) {
    logits.push_back(attention_logit(p, node_states.row(v), edge_feats.row(i.edge),
                                     node_states.row(i.neighbor), leaky_slope));
  }
  return numcore::softmax(logits);
}

std::vector<double> aggregate_node(const HeadParams& p, const Matrix& node_states,
                                   const Matrix& edge_feats, const flowdata::Adjacency& adj,
                                   std::size_t v, double leaky_slope) {
  const auto alpha = attention_weights(p, node_states, edge_feats, adj, v, leaky_slope);
  const auto inc = adj.incident(v);
  const std::size_t dn = p.node_dim(), de = p.edge_dim();
  std::vector<double> acc(p.out_dim(), 0.0);
  std::vector<double> x(2 * dn + de), m(p.out_dim());
  for (std::size_t j = 0; j < inc.size(); ++j) {
    const auto hv = node_states.row(v);
    const auto xe = edge_feats.row(inc[j].edge);
    const auto hu = node_states.row(inc[j].neighbor);
    std::copy(hv.begin(), hv.end(), x.begin());
    std::copy(xe.begin(), xe.end(), x.begin() + static_cast<std::ptrdiff_t>(dn));
    std::copy(hu.begin(), hu.end(), x.begin() + static_cast<std::ptrdiff_t>(dn + de));
    numcore::matvec(p.message, x, m);
    for (std::size_t r = 0; r < m.size(); ++r) acc[r] += alpha[j] * m[r];
  }
  return numcore::relu(acc);
}

HeadCache head_forward(const HeadParams& p, const Matrix& node_states, const Matrix& edge_feats,
                       const flowdata::Adjacency& adj, double leaky_slope) {
  check_shapes(p, node_states, edge_feats, adj);
  const std::size_t n = node_states.rows(), m = edge_feats.rows();
  const std::size_t dn = p.node_dim(), de = p.edge_dim(), dout = p.out_dim();

  HeadCache c;
  c.proj_node = numcore::project_rows(node_states, p.node_proj);
  c.proj_edge = numcore::project_rows(edge_feats, p.edge_proj);
  c.score_self.resize(n);
  c.score_nbr.resize(n);
  c.score_edge.resize(m);
  c.msg_self = Matrix(n, dout);
  c.msg_nbr = Matrix(n, dout);
  c.msg_edge = Matrix(m, dout);
  for (std::size_t v = 0; v < n; ++v) {
    c.score_self[v] = numcore::dot(attn_block(p, 0), c.proj_node.row(v));
    c.score_nbr[v] = numcore::dot(attn_block(p, 2), c.proj_node.row(v));
    block_matvec(p.message, 0, node_states.row(v), c.msg_self.row(v));
    block_matvec(p.message, dn + de, node_states.row(v), c.msg_nbr.row(v));
  }
  for (std::size_t e = 0; e < m; ++e) {
    c.score_edge[e] = numcore::dot(attn_block(p, 1), c.proj_edge.row(e));
    block_matvec(p.message, dn, edge_feats.row(e), c.msg_edge.row(e));
  }

  c.raw_score.resize(adj.total_incidences());
  c.alpha.resize(adj.total_incidences());
  c.pre = Matrix(n, dout);
  c.out = Matrix(n, dout);
  for (std::size_t v = 0; v < n; ++v) {
    const auto inc = adj.incident(v);
    if (inc.empty()) continue;
    const std::size_t base = adj.offset(v);
    std::vector<double> logits(inc.size());
    for (std::size_t j = 0; j < inc.size(); ++j) {
      const double s = c.score_self[v] + c.score_edge[inc[j].edge] + c.score_nbr[inc[j].neighbor];
      c.raw_score[base + j] = s;
      logits[j] = numcore::leaky_relu(s, leaky_slope);
    }
    const auto alpha = numcore::softmax(logits);
    auto pre = c.pre.row(v);
    for (std::size_t j = 0; j < inc.size(); ++j) {
      c.alpha[base + j] = alpha[j];
      const auto ms = c.msg_self.row(v);
      const auto me = c.msg_edge.row(inc[j].edge);
      const auto mu = c.msg_nbr.row(inc[j].neighbor);
      for (std::size_t r = 0; r < dout; ++r) pre[r] += alpha[j] * (ms[r] + me[r] + mu[r]);
    }
    auto out = c.out.row(v);
    for (std::size_t r = 0; r < dout; ++r) out[r] = pre[r] > 0.0 ? pre[r] : 0.0;
  }
  return c;
}

void head_backward(const HeadParams& p, const Matrix& node_states, const Matrix& edge_feats,
                   const flowdata::Adjacency& adj, const HeadCache& c, const Matrix& out_grad,
                   double leaky_slope, HeadParams& g, Matrix* node_grad, Matrix* edge_grad) {
  const std::size_t n = node_states.rows(), m = edge_feats.rows();
  const std::size_t dn = p.node_dim(), de = p.edge_dim(), dout = p.out_dim(), dp = p.proj_dim();
  if (out_grad.rows() != n || out_grad.cols() != dout) {
    throw InvalidArgument("head_backward: output gradient shape mismatch");
  }

  Matrix d_msg_self(n, dout), d_msg_nbr(n, dout), d_msg_edge(m, dout);
  std::vector<double> d_score_self(n, 0.0), d_score_nbr(n, 0.0), d_score_edge(m, 0.0);
  std::vector<double> d_pre(dout), d_alpha;

  for (std::size_t v = 0; v < n; ++v) {
    const auto inc = adj.incident(v);
    if (inc.empty()) continue;
    const std::size_t base = adj.offset(v);
    for (std::size_t r = 0; r < dout; ++r) d_pre[r] = c.pre(v, r) > 0.0 ? out_grad(v, r) : 0.0;

    d_alpha.assign(inc.size(), 0.0);
    double weighted = 0.0;
    for (std::size_t j = 0; j < inc.size(); ++j) {
      const double a = c.alpha[base + j];
      const auto ms = c.msg_self.row(v);
      const auto me = c.msg_edge.row(inc[j].edge);
      const auto mu = c.msg_nbr.row(inc[j].neighbor);
      auto dms = d_msg_self.row(v);
      auto dme = d_msg_edge.row(inc[j].edge);
      auto dmu = d_msg_nbr.row(inc[j].neighbor);
      double da = 0.0;
      for (std::size_t r = 0; r < dout; ++r) {
        da += d_pre[r] * (ms[r] + me[r] + mu[r]);
        const double gm = a * d_pre[r];
        dms[r] += gm;
        dme[r] += gm;
        dmu[r] += gm;
      }
      d_alpha[j] = da;
      weighted += a * da;
    }
    for (std::size_t j = 0; j < inc.size(); ++j) {
      const double a = c.alpha[base + j];
      const double d_logit = a * (d_alpha[j] - weighted);
      const double d_s = d_logit * (c.raw_score[base + j] > 0.0 ? 1.0 : leaky_slope);
      d_score_self[v] += d_s;
      d_score_edge[inc[j].edge] += d_s;
      d_score_nbr[inc[j].neighbor] += d_s;
    }
  }

  // Scores -> attention vector and projections.
  auto ga = g.attn.row(0);
  const auto a_self = attn_block(p, 0), a_edge = attn_block(p, 1), a_nbr = attn_block(p, 2);
  std::vector<double> d_proj(dp);
  for (std::size_t v = 0; v < n; ++v) {
    const auto pv = c.proj_node.row(v);
    for (std::size_t k = 0; k < dp; ++k) {
      ga[k] += d_score_self[v] * pv[k];
      ga[2 * dp + k] += d_score_nbr[v] * pv[k];
      d_proj[k] = d_score_self[v] * a_self[k] + d_score_nbr[v] * a_nbr[k];
    }
    numcore::outer_accumulate(g.node_proj, d_proj, node_states.row(v));
    if (node_grad) numcore::matvec_t_accumulate(p.node_proj, d_proj, node_grad->row(v));

    block_outer_acc(g.message, 0, d_msg_self.row(v), node_states.row(v));
    block_outer_acc(g.message, dn + de, d_msg_nbr.row(v), node_states.row(v));
    if (node_grad) {
      block_matvec_t_acc(p.message, 0, d_msg_self.row(v), node_grad->row(v));
      block_matvec_t_acc(p.message, dn + de, d_msg_nbr.row(v), node_grad->row(v));
    }
  }
  for (std::size_t e = 0; e < m; ++e) {
    const auto qe = c.proj_edge.row(e);
    for (std::size_t k = 0; k < dp; ++k) {
      ga[dp + k] += d_score_edge[e] * qe[k];
      d_proj[k] = d_score_edge[e] * a_edge[k];
    }
    numcore::outer_accumulate(g.edge_proj, d_proj, edge_feats.row(e));
    if (edge_grad) numcore::matvec_t_accumulate(p.edge_proj, d_proj, edge_grad->row(e));
    block_outer_acc(g.message, dn, d_msg_edge.row(e), edge_feats.row(e));
    if (edge_grad) block_matvec_t_acc(p.message, dn, d_msg_edge.row(e), edge_grad->row(e));
  }
}

}  // namespace flowcontrast::attention

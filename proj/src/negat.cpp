#include "flowcontrast/negat.hpp"

#include <algorithm>

#include "flowcontrast/errors.hpp"

namespace flowcontrast::negat {

using attention::HeadParams;

EncoderParams EncoderParams::init(const EncoderConfig& cfg, std::uint64_t seed) {
  if (cfg.layers == 0 || cfg.heads == 0 || cfg.proj_dim == 0 || cfg.out_dim == 0 ||
      cfg.node_feature_dim == 0 || cfg.edge_feature_dim == 0) {
    throw InvalidArgument("EncoderParams: all dimensions must be positive");
  }
  numcore::Rng rng(seed);
  EncoderParams p;
  p.config = cfg;
  for (std::size_t k = 0; k < cfg.layers; ++k) {
    std::vector<HeadParams> heads;
    for (std::size_t i = 0; i < cfg.heads; ++i) {
      heads.push_back(HeadParams::glorot(cfg.layer_input_dim(k), cfg.edge_feature_dim,
                                         cfg.proj_dim, cfg.out_dim, rng));
    }
    p.layers.push_back(std::move(heads));
  }
  return p;
}

EncoderParams EncoderParams::zeros_like(const EncoderParams& p) {
  EncoderParams z;
  z.config = p.config;
  for (const auto& layer : p.layers) {
    std::vector<HeadParams> heads;
    for (const auto& h : layer) {
      heads.push_back(HeadParams::zeros(h.node_dim(), h.edge_dim(), h.proj_dim(), h.out_dim()));
    }
    z.layers.push_back(std::move(heads));
  }
  return z;
}

std::vector<numcore::ParamBlock> EncoderParams::blocks() const {
  std::vector<numcore::ParamBlock> out;
  std::size_t offset = 0;
  for (std::size_t k = 0; k < layers.size(); ++k) {
    for (std::size_t i = 0; i < layers[k].size(); ++i) {
      layers[k][i].for_each_block([&](const std::string& name, const Matrix& w) {
        out.push_back({"encoder.layer" + std::to_string(k) + ".head" + std::to_string(i) + "." +
                           name,
                       offset, w.size()});
        offset += w.size();
      });
    }
  }
  return out;
}

std::size_t EncoderParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& b : blocks()) n += b.size;
  return n;
}

std::vector<double> EncoderParams::flatten() const {
  std::vector<double> flat;
  for (const auto& layer : layers) {
    for (const auto& h : layer) {
      h.for_each_block([&](const std::string&, const Matrix& w) {
        flat.insert(flat.end(), w.values().begin(), w.values().end());
      });
    }
  }
  return flat;
}

void EncoderParams::unflatten(std::span<const double> flat) {
  if (flat.size() != parameter_count()) throw InvalidArgument("unflatten: size mismatch");
  std::size_t offset = 0;
  for (auto& layer : layers) {
    for (auto& h : layer) {
      h.for_each_block([&](const std::string&, Matrix& w) {
        std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), w.size(),
                    w.values().begin());
        offset += w.size();
      });
    }
  }
}

bool EncoderParams::all_finite() const {
  bool ok = true;
  for (const auto& layer : layers) {
    for (const auto& h : layer) {
      h.for_each_block([&](const std::string&, const Matrix& w) { ok = ok && w.all_finite(); });
    }
  }
  return ok;
}

nlohmann::json EncoderParams::to_json() const {
  nlohmann::json j;
  j["config"] = {{"layers", config.layers},
                 {"heads", config.heads},
                 {"proj_dim", config.proj_dim},
                 {"out_dim", config.out_dim},
                 {"node_feature_dim", config.node_feature_dim},
                 {"edge_feature_dim", config.edge_feature_dim},
                 {"leaky_slope", config.leaky_slope}};
  nlohmann::json ls = nlohmann::json::array();
  for (const auto& layer : layers) {
    nlohmann::json hs = nlohmann::json::array();
    for (const auto& h : layer) hs.push_back(h.to_json());
    ls.push_back(std::move(hs));
  }
  j["layers"] = std::move(ls);
  return j;
}

EncoderParams EncoderParams::from_json(const nlohmann::json& j) {
  EncoderParams p;
  const auto& c = j.at("config");
  p.config.layers = c.at("layers").get<std::size_t>();
  p.config.heads = c.at("heads").get<std::size_t>();
  p.config.proj_dim = c.at("proj_dim").get<std::size_t>();
  p.config.out_dim = c.at("out_dim").get<std::size_t>();
  p.config.node_feature_dim = c.at("node_feature_dim").get<std::size_t>();
  p.config.edge_feature_dim = c.at("edge_feature_dim").get<std::size_t>();
  p.config.leaky_slope = c.at("leaky_slope").get<double>();
  for (const auto& layer : j.at("layers")) {
    std::vector<HeadParams> heads;
    for (const auto& h : layer) heads.push_back(HeadParams::from_json(h));
    p.layers.push_back(std::move(heads));
  }
  if (p.layers.size() != p.config.layers) throw InvalidArgument("encoder json: layer count");
  for (std::size_t k = 0; k < p.layers.size(); ++k) {
    if (p.layers[k].size() != p.config.heads) throw InvalidArgument("encoder json: head count");
    for (const auto& h : p.layers[k]) {
      if (h.node_dim() != p.config.layer_input_dim(k) ||
          h.edge_dim() != p.config.edge_feature_dim || h.proj_dim() != p.config.proj_dim ||
          h.out_dim() != p.config.out_dim) {
        throw InvalidArgument("encoder json: head shape does not match config");
      }
    }
  }
  return p;
}

// ---------------------------------------------------------------------------

namespace {

void check_graph(const flowdata::FlowGraph& g, const EncoderParams& p) {
  if (g.node_count() == 0) throw InvalidArgument("encode_graph: empty graph");
  if (g.edge_feature_dim() != p.config.edge_feature_dim ||
      g.node_feature_dim() != p.config.node_feature_dim) {
    throw InvalidArgument("encode_graph: graph feature dims do not match encoder");
  }
}

}  // namespace

EncoderTrace encode_forward(const flowdata::FlowGraph& g, const EncoderParams& p) {
  check_graph(g, p);
  const auto& cfg = p.config;
  EncoderTrace t;
  Matrix state = g.node_features();
  for (std::size_t k = 0; k < p.layers.size(); ++k) {
    std::vector<attention::HeadCache> caches;
    Matrix next(g.node_count(), cfg.heads * cfg.out_dim);
    for (std::size_t i = 0; i < p.layers[k].size(); ++i) {
      caches.push_back(attention::head_forward(p.layers[k][i], state, g.edge_features(),
                                               g.adjacency(), cfg.leaky_slope));
      const Matrix& out = caches.back().out;
      for (std::size_t v = 0; v < g.node_count(); ++v) {
        std::copy(out.row(v).begin(), out.row(v).end(),
                  next.row(v).begin() + static_cast<std::ptrdiff_t>(i * cfg.out_dim));
      }
    }
    t.layer_inputs.push_back(std::move(state));
    t.caches.push_back(std::move(caches));
    state = std::move(next);
  }
  t.embedding.edges = edge_embeddings(g, state);
  t.embedding.nodes = std::move(state);
  return t;
}

GraphEmbedding encode_graph(const flowdata::FlowGraph& g, const EncoderParams& p) {
  return std::move(encode_forward(g, p).embedding);
}

Matrix edge_embeddings(const flowdata::FlowGraph& g, const Matrix& z) {
  const std::size_t d = z.cols();
  Matrix out(g.edge_count(), 2 * d);
  for (std::size_t e = 0; e < g.edge_count(); ++e) {
    const auto& edge = g.edge(e);
    auto row = out.row(e);
    std::copy(z.row(edge.src).begin(), z.row(edge.src).end(), row.begin());
    std::copy(z.row(edge.dst).begin(), z.row(edge.dst).end(),
              row.begin() + static_cast<std::ptrdiff_t>(d));
  }
  return out;
}

void fold_edge_gradient(const flowdata::FlowGraph& g, const Matrix& edge_grad, Matrix& node_grad) {
  const std::size_t d = node_grad.cols();
  if (edge_grad.rows() != g.edge_count() || edge_grad.cols() != 2 * d) {
    throw InvalidArgument("fold_edge_gradient: shape mismatch");
  }
  for (std::size_t e = 0; e < g.edge_count(); ++e) {
    const auto& edge = g.edge(e);
    const auto row = edge_grad.row(e);
    auto gs = node_grad.row(edge.src);
    auto gd = node_grad.row(edge.dst);
    for (std::size_t c = 0; c < d; ++c) {
      gs[c] += row[c];
      gd[c] += row[d + c];
    }
  }
}

EncoderParams encode_backward(const flowdata::FlowGraph& g, const EncoderParams& p,
                              const EncoderTrace& t, const Matrix& node_embedding_grad) {
  const auto& cfg = p.config;
  EncoderParams grad = EncoderParams::zeros_like(p);
  Matrix upstream = node_embedding_grad;
  for (std::size_t k = p.layers.size(); k-- > 0;) {
    const Matrix& input = t.layer_inputs[k];
    // Layer-0 inputs are the constant node features; no gradient needed there.
    Matrix input_grad(input.rows(), input.cols());
    for (std::size_t i = 0; i < p.layers[k].size(); ++i) {
      Matrix head_grad(g.node_count(), cfg.out_dim);
      for (std::size_t v = 0; v < g.node_count(); ++v) {
        const auto src = upstream.row(v).subspan(i * cfg.out_dim, cfg.out_dim);
        std::copy(src.begin(), src.end(), head_grad.row(v).begin());
      }
      attention::head_backward(p.layers[k][i], input, g.edge_features(), g.adjacency(),
                               t.caches[k][i], head_grad, cfg.leaky_slope, grad.layers[k][i],
                               k > 0 ? &input_grad : nullptr, nullptr);
    }
    upstream = std::move(input_grad);
  }
  return grad;
}

double attention_logit(const flowdata::FlowGraph& g, const EncoderParams& p,
                       const EncoderTrace& t, std::size_t layer, std::size_t head, std::size_t v,
                       std::size_t incidence) {
  const auto inc = g.incident(v);
  if (incidence >= inc.size()) throw InvalidArgument("attention_logit: incidence out of range");
  const Matrix& h = t.layer_inputs.at(layer);
  return attention::attention_logit(p.layers.at(layer).at(head), h.row(v),
                                    g.edge_features().row(inc[incidence].edge),
                                    h.row(inc[incidence].neighbor), p.config.leaky_slope);
}

std::vector<double> attention_weights(const flowdata::FlowGraph& g, const EncoderParams& p,
                                      const EncoderTrace& t, std::size_t layer, std::size_t head,
                                      std::size_t v) {
  return attention::attention_weights(p.layers.at(layer).at(head), t.layer_inputs.at(layer),
                                      g.edge_features(), g.adjacency(), v, p.config.leaky_slope);
}

std::vector<double> aggregate_node(const flowdata::FlowGraph& g, const EncoderParams& p,
                                   const EncoderTrace& t, std::size_t layer, std::size_t v) {
  std::vector<double> out;
  for (const auto& head : p.layers.at(layer)) {
    const auto h = attention::aggregate_node(head, t.layer_inputs.at(layer), g.edge_features(),
                                             g.adjacency(), v, p.config.leaky_slope);
    out.insert(out.end(), h.begin(), h.end());
  }
  return out;
}

}  // namespace flowcontrast::negat

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "flowcontrast/downeval.hpp"
#include "flowcontrast/errors.hpp"
#include "flowcontrast/negat.hpp"
#include "flowcontrast/negsc.hpp"
#include "flowcontrast/pipeline.hpp"
#include "flowcontrast/transport.hpp"

namespace py = pybind11;
using namespace flowcontrast;
using numcore::Matrix;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw InvalidArgument("expected a 2-d array");
  Matrix m(a.shape(0), a.shape(1));
  std::copy(a.data(), a.data() + a.size(), m.values().begin());
  return m;
}

Array to_array(const Matrix& m) {
  Array a({m.rows(), m.cols()});
  std::copy(m.values().begin(), m.values().end(), a.mutable_data());
  return a;
}

std::vector<double> marginal_or_uniform(const std::optional<std::vector<double>>& w,
                                        std::size_t n) {
  return w ? *w : negsc::uniform_marginal(n);
}

flowdata::FlowGraph make_graph(std::size_t nodes, const std::vector<std::size_t>& src,
                               const std::vector<std::size_t>& dst, const Array& features) {
  if (src.size() != dst.size()) throw InvalidArgument("src and dst differ in length");
  const Matrix x = to_matrix(features);
  if (x.rows() != src.size()) throw InvalidArgument("one feature row per edge expected");
  std::vector<std::string> names;
  for (std::size_t i = 0; i < nodes; ++i) names.push_back(std::to_string(i));
  std::vector<flowdata::FlowEdge> edges;
  for (std::size_t e = 0; e < src.size(); ++e) {
    if (src[e] >= nodes || dst[e] >= nodes) throw InvalidArgument("edge endpoint out of range");
    edges.push_back({src[e], dst[e], e});
  }
  return {names, edges, x};
}

negsc::RelationGraph relations(std::size_t n,
                               const std::vector<std::tuple<std::size_t, std::size_t, double>>& p) {
  negsc::RelationGraph g{n, {}};
  for (const auto& [a, b, d] : p) g.pairs.push_back({a, b, d});
  return g;
}

py::object json_to_py(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

pipeline::RunConfig config_from(const std::optional<std::string>& path,
                                const std::vector<std::string>& overrides,
                                const std::optional<std::string>& out) {
  return pipeline::resolve_config(path, overrides, out);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Edge-attention flow encoder with optimal-transport subgraph contrast";

  py::register_exception<ConfigError>(m, "ConfigError");
  py::register_exception<SchemaError>(m, "SchemaError");
  py::register_exception<IoError>(m, "IoError");
  py::register_exception<NumericError>(m, "NumericError");
  py::register_exception<DegenerateError>(m, "DegenerateError");
  py::register_exception<CheckFailed>(m, "CheckFailed");
  py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);

  m.def(
      "encode_graph",
      [](std::size_t nodes, const std::vector<std::size_t>& src,
         const std::vector<std::size_t>& dst, const Array& features, std::size_t layers,
         std::size_t heads, std::size_t proj_dim, std::size_t out_dim, std::uint64_t seed) {
        const auto g = make_graph(nodes, src, dst, features);
        negat::EncoderConfig cfg;
        cfg.layers = layers;
        cfg.heads = heads;
        cfg.proj_dim = proj_dim;
        cfg.out_dim = out_dim;
        cfg.edge_feature_dim = g.edge_feature_dim();
        const auto z = negat::encode_graph(g, negat::EncoderParams::init(cfg, seed));
        return py::make_tuple(to_array(z.nodes), to_array(z.edges));
      },
      py::arg("nodes"), py::arg("src"), py::arg("dst"), py::arg("features"),
      py::arg("layers") = 1, py::arg("heads") = 3, py::arg("proj_dim") = 32,
      py::arg("out_dim") = 32, py::arg("seed") = 1,
      "Node and edge embeddings from a freshly initialised encoder.");

  m.def(
      "sinkhorn_wd",
      [](const Array& cost, std::optional<std::vector<double>> mu,
         std::optional<std::vector<double>> nu, double epsilon, std::size_t max_iter,
         double tol, bool anneal) {
        const Matrix c = to_matrix(cost);
        const auto a = marginal_or_uniform(mu, c.rows());
        const auto b = marginal_or_uniform(nu, c.cols());
        const auto r = negsc::sinkhorn_wd(c, a, b, {epsilon, max_iter, tol, anneal});
        py::dict d;
        d["value"] = r.value;
        d["plan"] = to_array(r.plan.plan);
        d["iterations"] = r.plan.iterations;
        d["marginal_residual"] = r.plan.marginal_residual;
        d["converged"] = r.plan.converged;
        return d;
      },
      py::arg("cost"), py::arg("mu") = py::none(), py::arg("nu") = py::none(),
      py::arg("epsilon") = 0.05, py::arg("max_iter") = 200, py::arg("tol") = 1e-9,
      py::arg("anneal") = false);

  m.def(
      "gromov_wd",
      [](std::size_t n1, const std::vector<std::tuple<std::size_t, std::size_t, double>>& p1,
         std::size_t n2, const std::vector<std::tuple<std::size_t, std::size_t, double>>& p2,
         double epsilon, std::size_t outer_iter) {
        const auto s = relations(n1, p1), g = relations(n2, p2);
        negsc::GwOptions o;
        o.inner.epsilon = epsilon;
        o.outer_iter = outer_iter;
        const auto r = negsc::gromov_wd(s, g, negsc::uniform_marginal(n1),
                                        negsc::uniform_marginal(n2), o);
        py::dict d;
        d["value"] = r.value;
        d["plan"] = to_array(r.plan.plan);
        d["objective_trace"] = r.objective_trace;
        d["converged"] = r.converged;
        return d;
      },
      py::arg("n1"), py::arg("pairs1"), py::arg("n2"), py::arg("pairs2"),
      py::arg("epsilon") = 0.05, py::arg("outer_iter") = 10,
      "Pairs are (a, b, distance) triples over each graph's nodes.");

  m.def(
      "contrastive_loss",
      [](const std::vector<std::pair<double, double>>& positives,
         const std::vector<std::vector<std::pair<double, double>>>& negatives,
         double temperature) {
        std::vector<negsc::PairDistances> pos;
        for (auto [wd, gwd] : positives) pos.push_back({wd, gwd});
        std::vector<std::vector<negsc::PairDistances>> neg;
        for (const auto& row : negatives) {
          auto& out = neg.emplace_back();
          for (auto [wd, gwd] : row) out.push_back({wd, gwd});
        }
        const auto t = negsc::contrastive_loss(pos, neg, temperature);
        return py::make_tuple(t.total, t.edges, t.topology);
      },
      py::arg("positives"), py::arg("negatives"), py::arg("temperature") = 0.2,
      "(total, edge term, topology term); distances are (wd, gwd) pairs.");

  m.def(
      "kmeans",
      [](const Array& x, std::size_t clusters, std::uint64_t seed) {
        const auto r = downeval::kmeans_embed(to_matrix(x), clusters, seed);
        return py::make_tuple(r.assignments, to_array(r.centroids), r.inertia);
      },
      py::arg("x"), py::arg("clusters"), py::arg("seed") = 1);

  m.def(
      "map_clusters",
      [](const std::vector<std::size_t>& assignments, const std::vector<std::size_t>& labels) {
        const auto r = downeval::map_clusters(assignments, labels);
        return py::make_tuple(r.cluster_to_label, r.accuracy);
      },
      py::arg("assignments"), py::arg("labels"));

  m.def(
      "compute_metrics",
      [](const std::vector<std::size_t>& truth, const std::vector<std::size_t>& pred,
         const std::vector<std::string>& classes, std::optional<std::size_t> positive) {
        return json_to_py(downeval::compute_metrics(truth, pred, classes, positive).to_json());
      },
      py::arg("truth"), py::arg("pred"), py::arg("classes"), py::arg("positive") = py::none(),
      "Metric report as a dict (rates in percent).");

  m.def(
      "roc_auc",
      [](const std::vector<double>& scores, const std::vector<bool>& positive) {
        return downeval::roc_curve(scores, positive).auc;
      },
      py::arg("scores"), py::arg("positive"), "None when only one class is present.");

  m.def(
      "gradcheck",
      [](std::uint64_t seed, std::size_t dim, double perturbation, bool corrupt) {
        const auto inst = pipeline::make_gradcheck_instance(seed, dim);
        const auto r = pipeline::check_loss_gradient(inst, perturbation, corrupt);
        py::dict blocks;
        for (const auto& b : r.report.blocks) blocks[py::str(b.name)] = b.max_rel_error;
        py::dict d;
        d["loss"] = r.loss;
        d["parameters"] = r.analytic.size();
        d["max_rel_error"] = r.report.global_max_rel_error;
        d["blocks"] = blocks;
        return d;
      },
      py::arg("seed") = 4, py::arg("dim") = 8, py::arg("perturbation") = 1e-5,
      py::arg("corrupt") = false);

  m.def(
      "default_config",
      []() {
        py::dict d;
        const pipeline::RunConfig c;
        for (const auto& k : pipeline::RunConfig::keys()) d[py::str(k)] = c.get(k);
        return d;
      },
      "Every config key with its shipped default, as strings.");

  m.def(
      "run",
      [](const std::string& command, std::optional<std::string> config,
         const std::vector<std::string>& overrides, std::optional<std::string> out) {
        const auto cfg = config_from(config, overrides, out);
        pipeline::CommandResult r;
        if (command == "synth") r = pipeline::cmd_synth(cfg);
        else if (command == "preprocess") r = pipeline::cmd_preprocess(cfg);
        else if (command == "train") r = pipeline::cmd_train(cfg);
        else if (command == "embed") r = pipeline::cmd_embed(cfg, std::nullopt);
        else if (command == "eval") r = pipeline::cmd_eval(cfg);
        else throw InvalidArgument("unknown command '" + command + "'");
        return py::make_tuple(r.written, r.warnings);
      },
      py::arg("command"), py::arg("config") = py::none(),
      py::arg("overrides") = std::vector<std::string>{}, py::arg("out") = py::none(),
      "Runs one pipeline command; returns (written files, warnings).");
}

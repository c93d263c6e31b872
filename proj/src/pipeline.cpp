#include "flowcontrast/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "flowcontrast/errors.hpp"

namespace flowcontrast::pipeline {

namespace fs = std::filesystem;
using textio::format_double;

namespace {

std::size_t to_size(const std::string& key, const std::string& v) {
  const auto n = textio::parse_int(v);
  if (!n || *n < 0) throw ConfigError("config: " + key + " needs a non-negative integer, got '" + v + "'");
  return static_cast<std::size_t>(*n);
}

double to_double(const std::string& key, const std::string& v) {
  const auto d = textio::parse_double(v);
  if (!d) throw ConfigError("config: " + key + " needs a number, got '" + v + "'");
  return *d;
}

std::string join(const std::vector<std::string>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? "," : "") + xs[i];
  return out;
}

struct Field {
  const char* key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

#define FC_SIZE(KEY, MEMBER)                                                   \
  Field {                                                                      \
    KEY, [](const RunConfig& c) { return std::to_string(c.MEMBER); },          \
        [](RunConfig& c, const std::string& v) { c.MEMBER = to_size(KEY, v); } \
  }
#define FC_DOUBLE(KEY, MEMBER)                                                   \
  Field {                                                                        \
    KEY, [](const RunConfig& c) { return format_double(c.MEMBER); },             \
        [](RunConfig& c, const std::string& v) { c.MEMBER = to_double(KEY, v); } \
  }
#define FC_STRING(KEY, MEMBER)                                       \
  Field {                                                            \
    KEY, [](const RunConfig& c) { return c.MEMBER; },                \
        [](RunConfig& c, const std::string& v) { c.MEMBER = v; }     \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      FC_STRING("schema", schema),
      Field{"data", [](const RunConfig& c) { return join(c.data); },
            [](RunConfig& c, const std::string& v) { c.data = textio::split_list(v); }},
      FC_DOUBLE("fraction", fraction),
      FC_DOUBLE("train_ratio", train_ratio),
      FC_STRING("node_key", node_key),
      FC_SIZE("encoder.layers", encoder.layers),
      FC_SIZE("encoder.heads", encoder.heads),
      FC_SIZE("encoder.proj_dim", encoder.proj_dim),
      FC_SIZE("encoder.out_dim", encoder.out_dim),
      FC_SIZE("encoder.node_feature_dim", encoder.node_feature_dim),
      FC_DOUBLE("encoder.leaky_slope", encoder.leaky_slope),
      FC_STRING("encoder.activation", activation),
      FC_STRING("optimizer", optimizer),
      FC_SIZE("contrast.centers", contrast.centers),
      FC_SIZE("contrast.neighbors", contrast.neighbors),
      FC_SIZE("contrast.negatives", contrast.negatives),
      FC_DOUBLE("contrast.temperature", contrast.temperature),
      FC_DOUBLE("contrast.sinkhorn_epsilon", contrast.sinkhorn_epsilon),
      FC_SIZE("contrast.sinkhorn_max_iter", contrast.sinkhorn_max_iter),
      FC_DOUBLE("contrast.sinkhorn_tol", contrast.sinkhorn_tol),
      FC_SIZE("contrast.gw_outer_iter", contrast.gw_outer_iter),
      FC_SIZE("contrast.generator_proj_dim", contrast.generator_proj_dim),
      FC_DOUBLE("contrast.learning_rate", contrast.learning_rate),
      FC_SIZE("contrast.epochs", contrast.epochs),
      FC_SIZE("contrast.batches_per_epoch", contrast.batches_per_epoch),
      FC_SIZE("synth.classes", synth.classes),
      FC_SIZE("synth.nodes", synth.nodes),
      FC_SIZE("synth.edges", synth.edges),
      FC_DOUBLE("synth.separation", synth.separation),
      FC_SIZE("synth.feature_dim", synth.feature_dim),
      FC_DOUBLE("synth.community_bias", synth.community_bias),
      FC_SIZE("synth.seed", synth.seed),
      FC_STRING("eval.mode", eval_mode),
      FC_STRING("eval.task", eval_task),
      FC_SIZE("eval.probe_epochs", probe_epochs),
      FC_DOUBLE("eval.probe_lr", probe_lr),
      FC_SIZE("eval.kmeans_restarts", kmeans_restarts),
      FC_SIZE("eval.kmeans_max_iter", kmeans_max_iter),
      FC_SIZE("gradcheck.seed", gradcheck_seed),
      FC_SIZE("gradcheck.dim", gradcheck_dim),
      FC_DOUBLE("gradcheck.perturbation", gradcheck_perturbation),
      FC_DOUBLE("gradcheck.tolerance", gradcheck_tolerance),
      FC_STRING("out_dir", out_dir),
      FC_SIZE("seed", seed),
  };
  return f;
}

#undef FC_SIZE
#undef FC_DOUBLE
#undef FC_STRING

const Field& field(const std::string& key) {
  for (const auto& f : fields()) {
    if (key == f.key) return f;
  }
  throw ConfigError("config: unknown key '" + key + "'");
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir + "': " + ec.message());
}

void require_file(const std::string& path, const std::string& hint) {
  if (!fs::exists(path)) throw IoError("missing input '" + path + "' (" + hint + ")");
}

nlohmann::json parse_json_file(const std::string& path) {
  try {
    return nlohmann::json::parse(textio::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(path + ": " + e.what());
  }
}

void write_json(const std::string& path, const nlohmann::json& j) {
  textio::write_file(path, j.dump(2) + "\n");
}

}  // namespace

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> k;
  for (const auto& f : fields()) k.emplace_back(f.key);
  return k;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  field(key).set(*this, textio::trim(value));
}

std::string RunConfig::get(const std::string& key) const { return field(key).get(*this); }

void RunConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
  set(textio::trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

RunConfig RunConfig::from_key_values(const textio::KeyValues& kv) {
  RunConfig c;
  for (const auto& [k, v] : kv) c.set(k, v);
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  return from_key_values(textio::load_key_values(path));
}

std::string RunConfig::to_text() const {
  std::ostringstream out;
  for (const auto& f : fields()) out << f.key << " = " << f.get(*this) << '\n';
  return out.str();
}

std::string RunConfig::hash() const {
  std::ostringstream out;
  for (const auto& f : fields()) {
    if (std::string(f.key) != "out_dir") out << f.key << " = " << f.get(*this) << '\n';
  }
  return textio::fnv1a_hex(out.str());
}

void RunConfig::validate() const {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ConfigError("fraction must lie in (0, 1], got " + format_double(fraction));
  }
  if (!(train_ratio > 0.0 && train_ratio < 1.0)) {
    throw ConfigError("train_ratio must lie in (0, 1), got " + format_double(train_ratio));
  }
  try {
    flowdata::parse_node_key(node_key);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  if (encoder.layers == 0 || encoder.heads == 0 || encoder.proj_dim == 0 ||
      encoder.out_dim == 0 || encoder.node_feature_dim == 0) {
    throw ConfigError("encoder dimensions must be positive");
  }
  if (activation != "relu") throw ConfigError("encoder.activation: only relu is implemented");
  if (optimizer != "adam") throw ConfigError("optimizer: only adam is implemented");
  contrast.validate();
  if (eval_mode != "clustering" && eval_mode != "probe" && eval_mode != "both") {
    throw ConfigError("eval.mode must be clustering, probe or both");
  }
  if (eval_task != "multiclass" && eval_task != "binary") {
    throw ConfigError("eval.task must be multiclass or binary");
  }
  if (gradcheck_dim == 0) throw ConfigError("gradcheck.dim must be positive");
  if (!(gradcheck_perturbation >= 1e-6 && gradcheck_perturbation <= 1e-4)) {
    throw ConfigError("gradcheck.perturbation must lie in [1e-6, 1e-4]");
  }
  if (out_dir.empty()) throw ConfigError("out_dir must not be empty");
}

std::string RunConfig::path(const std::string& name) const {
  return (fs::path(out_dir) / name).string();
}

flowdata::FeatureSchema RunConfig::resolve_schema() const {
  if (schema == "synthetic") return flowdata::FeatureSchema::synthetic(synth.feature_dim);
  if (schema == "netflow_v1") return flowdata::FeatureSchema::netflow_v1();
  return flowdata::FeatureSchema::load(schema);
}

RunConfig resolve_config(const std::optional<std::string>& config_path,
                         const std::vector<std::string>& overrides,
                         const std::optional<std::string>& out_dir) {
  RunConfig c = config_path ? RunConfig::load(*config_path) : RunConfig{};
  if (const char* env = std::getenv(kOutDirEnv); env && *env) c.out_dir = env;
  for (const auto& o : overrides) c.apply_override(o);
  if (out_dir) c.out_dir = *out_dir;
  return c;
}

// ---------------------------------------------------------------------------

nlohmann::json Checkpoint::to_json() const {
  return {{"format", "flowcontrast-checkpoint/1"},
          {"config_hash", config_hash},
          {"encoder", encoder.to_json()},
          {"generator", generator.to_json()}};
}

Checkpoint Checkpoint::from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "flowcontrast-checkpoint/1") throw SchemaError("unknown checkpoint format");
    Checkpoint c;
    c.config_hash = j.at("config_hash").get<std::string>();
    c.encoder = negat::EncoderParams::from_json(j.at("encoder"));
    c.generator = negsc::GeneratorParams::from_json(j.at("generator"));
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("checkpoint: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw SchemaError(std::string("checkpoint: ") + e.what());
  }
}

void write_checkpoint(const std::string& path, const Checkpoint& c) { write_json(path, c.to_json()); }

Checkpoint read_checkpoint(const std::string& path) {
  return Checkpoint::from_json(parse_json_file(path));
}

std::string embedding_csv(const flowdata::FlowGraph& g, const numcore::Matrix& z) {
  std::ostringstream out;
  std::vector<std::string> header{"edge", "label", "attack"};
  for (std::size_t c = 0; c < z.cols(); ++c) header.push_back("z" + std::to_string(c));
  textio::write_csv_row(out, header);
  const bool truth = g.edge_labels.size() == g.edge_count();
  for (std::size_t e = 0; e < z.rows(); ++e) {
    std::vector<std::string> row{std::to_string(e), truth ? std::to_string(g.edge_labels[e]) : "",
                                 truth ? g.edge_attacks[e] : ""};
    for (double v : z.row(e)) row.push_back(format_double(v));
    textio::write_csv_row(out, row);
  }
  return out.str();
}

EmbeddingTable read_embedding_csv(const std::string& path) {
  std::istringstream in(textio::read_file(path));
  std::vector<std::string> fields;
  if (!textio::read_csv_row(in, fields) || fields.size() < 4 || fields[0] != "edge" ||
      fields[1] != "label" || fields[2] != "attack") {
    throw SchemaError(path + ": expected header edge,label,attack,z0,...");
  }
  const std::size_t dim = fields.size() - 3;
  EmbeddingTable t;
  std::vector<double> values;
  std::size_t line = 1;
  while (textio::read_csv_row(in, fields)) {
    ++line;
    if (fields.size() != dim + 3) throw SchemaError(path + ": wrong field count on line " + std::to_string(line));
    const auto label = textio::parse_int(fields[1]);
    if (!label) throw SchemaError(path + ": missing label on line " + std::to_string(line));
    t.labels.push_back(static_cast<int>(*label));
    t.attacks.push_back(fields[2]);
    for (std::size_t c = 0; c < dim; ++c) {
      const auto v = textio::parse_double(fields[3 + c]);
      if (!v) throw SchemaError(path + ": bad value on line " + std::to_string(line));
      values.push_back(*v);
    }
  }
  t.embeddings = numcore::Matrix(t.labels.size(), dim);
  std::copy(values.begin(), values.end(), t.embeddings.values().begin());
  return t;
}

// ---------------------------------------------------------------------------

CommandResult cmd_synth(const RunConfig& cfg) {
  cfg.validate();
  ensure_dir(cfg.out_dir);
  flowdata::SynthConfig sc = cfg.synth;
  std::vector<flowdata::FlowRecord> records;
  try {
    records = flowdata::synth_dataset(sc);
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  const auto schema = flowdata::FeatureSchema::synthetic(sc.feature_dim);
  std::ostringstream csv;
  flowdata::write_netflow_csv(csv, records, schema);
  CommandResult r;
  r.written = {cfg.path("synth.csv"), cfg.path("synth.schema")};
  textio::write_file(r.written[0], csv.str());
  textio::write_file(r.written[1], schema.to_text());
  return r;
}

CommandResult cmd_preprocess(const RunConfig& cfg) {
  cfg.validate();
  if (cfg.data.empty()) throw ConfigError("preprocess: no input data (set data = path.csv)");
  const auto schema = cfg.resolve_schema();
  const auto node_key = flowdata::parse_node_key(cfg.node_key);

  std::vector<flowdata::FlowRecord> all;
  std::size_t skipped = 0;
  std::vector<std::string> reasons;
  for (const auto& path : cfg.data) {
    auto parsed = flowdata::parse_netflow_csv(path, schema);
    skipped += parsed.skipped;
    for (auto& s : parsed.skip_reasons) reasons.push_back(path + ": " + s);
    std::move(parsed.records.begin(), parsed.records.end(), std::back_inserter(all));
  }
  if (all.empty()) throw SchemaError("preprocess: no valid records in input");
  const auto records = flowdata::stratified_downsample(all, cfg.fraction, cfg.seed);
  const auto split = flowdata::holdout_split(records, cfg.train_ratio, cfg.seed);
  std::vector<flowdata::FlowRecord> train, test;
  for (auto i : split.train) train.push_back(records[i]);
  for (auto i : split.test) test.push_back(records[i]);
  if (train.empty() || test.empty()) throw ConfigError("preprocess: split left an empty side");

  const auto standardizer = flowdata::fit_standardizer(train, schema);
  const auto g_train = flowdata::build_graph(train, standardizer.apply(train), node_key,
                                             cfg.encoder.node_feature_dim);
  const auto g_test = flowdata::build_graph(test, standardizer.apply(test), node_key,
                                            cfg.encoder.node_feature_dim);
  ensure_dir(cfg.out_dir);
  const std::string hash = cfg.hash();
  CommandResult r;
  flowdata::write_graph(g_train, cfg.path("train_graph.csv"), cfg.path("train_graph.json"),
                        standardizer.column_names, hash);
  flowdata::write_graph(g_test, cfg.path("test_graph.csv"), cfg.path("test_graph.json"),
                        standardizer.column_names, hash);
  nlohmann::json sj = standardizer.to_json();
  sj["config_hash"] = hash;
  write_json(cfg.path("standardizer.json"), sj);

  r.warnings = split.warnings;
  r.warnings.insert(r.warnings.end(), standardizer.warnings.begin(), standardizer.warnings.end());
  nlohmann::json manifest = {{"format", "flowcontrast-split/1"},
                             {"config_hash", hash},
                             {"inputs", cfg.data},
                             {"parsed_records", all.size()},
                             {"skipped_rows", skipped},
                             {"skip_reasons", reasons},
                             {"downsampled_records", records.size()},
                             {"train_records", train.size()},
                             {"test_records", test.size()},
                             {"train_indices", split.train},
                             {"test_indices", split.test},
                             {"warnings", r.warnings}};
  write_json(cfg.path("split.json"), manifest);
  r.written = {cfg.path("train_graph.csv"), cfg.path("train_graph.json"),
               cfg.path("test_graph.csv"),  cfg.path("test_graph.json"),
               cfg.path("standardizer.json"), cfg.path("split.json")};
  return r;
}

namespace {

flowdata::FlowGraph load_graph(const RunConfig& cfg, const std::string& name) {
  const std::string csv = cfg.path(name + "_graph.csv"), meta = cfg.path(name + "_graph.json");
  require_file(csv, "run preprocess first");
  require_file(meta, "run preprocess first");
  return flowdata::read_graph(csv, meta);
}

negat::EncoderConfig encoder_config(const RunConfig& cfg, const flowdata::FlowGraph& g) {
  negat::EncoderConfig ec = cfg.encoder;
  ec.edge_feature_dim = g.edge_feature_dim();
  ec.node_feature_dim = g.node_feature_dim();
  return ec;
}

}  // namespace

CommandResult cmd_train(const RunConfig& cfg) {
  cfg.validate();
  const auto graph = load_graph(cfg, "train");
  const auto ec = encoder_config(cfg, graph);
  Checkpoint init;
  init.encoder = negat::EncoderParams::init(ec, cfg.encoder_seed());
  init.generator = negsc::GeneratorParams::init(ec.embedding_dim(), cfg.contrast.generator_proj_dim,
                                                cfg.generator_seed());
  init.generator.leaky_slope = ec.leaky_slope;
  negsc::ContrastConfig cc = cfg.contrast;
  cc.seed = cfg.train_seed();

  const auto start = std::chrono::steady_clock::now();
  auto result = negsc::train(graph, init.encoder, init.generator, cc);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  Checkpoint out{std::move(result.encoder), std::move(result.generator), cfg.hash()};
  ensure_dir(cfg.out_dir);
  CommandResult r;
  r.warnings = result.warnings;
  write_checkpoint(cfg.path("checkpoint.json"), out);
  textio::write_file(cfg.path("loss_trace.csv"), negsc::loss_trace_csv(result.trace));
  nlohmann::json log = {{"config_hash", out.config_hash},
                        {"total_seconds", seconds},
                        {"warnings", result.warnings}};
  log["epoch_seconds"] = nlohmann::json::array();
  for (const auto& e : result.trace) log["epoch_seconds"].push_back(e.wall_seconds);
  write_json(cfg.path("train_log.json"), log);
  r.written = {cfg.path("checkpoint.json"), cfg.path("loss_trace.csv"), cfg.path("train_log.json")};
  return r;
}

CommandResult cmd_embed(const RunConfig& cfg, const std::optional<std::string>& checkpoint) {
  cfg.validate();
  const std::string ck = checkpoint.value_or(cfg.path("checkpoint.json"));
  require_file(ck, "run train first");
  const Checkpoint c = read_checkpoint(ck);
  CommandResult r;
  for (const std::string name : {"train", "test"}) {
    const auto g = load_graph(cfg, name);
    if (g.edge_feature_dim() != c.encoder.config.edge_feature_dim) {
      throw SchemaError("embed: checkpoint edge feature width does not match " + name + " graph");
    }
    const auto emb = negat::encode_graph(g, c.encoder);
    const std::string path = cfg.path(name + "_embeddings.csv");
    textio::write_file(path, embedding_csv(g, emb.edges));
    r.written.push_back(path);
  }
  return r;
}

CommandResult cmd_eval(const RunConfig& cfg) {
  cfg.validate();
  const std::string train_path = cfg.path("train_embeddings.csv");
  const std::string test_path = cfg.path("test_embeddings.csv");
  require_file(train_path, "run embed first");
  require_file(test_path, "run embed first");
  const auto train = read_embedding_csv(train_path);
  const auto test = read_embedding_csv(test_path);
  if (train.embeddings.cols() != test.embeddings.cols()) {
    throw SchemaError("eval: train and test embeddings differ in width");
  }

  std::vector<std::string> classes;
  std::optional<std::size_t> positive;
  std::vector<std::size_t> y_train, y_test;
  if (cfg.eval_task == "binary") {
    classes = {"benign", "attack"};
    positive = 1;
    for (int l : train.labels) y_train.push_back(l == 1 ? 1 : 0);
    for (int l : test.labels) y_test.push_back(l == 1 ? 1 : 0);
  } else {
    std::set<std::string> names(train.attacks.begin(), train.attacks.end());
    names.insert(test.attacks.begin(), test.attacks.end());
    classes.assign(names.begin(), names.end());
    auto index = [&](const std::string& a) {
      return static_cast<std::size_t>(std::find(classes.begin(), classes.end(), a) - classes.begin());
    };
    for (const auto& a : train.attacks) y_train.push_back(index(a));
    for (const auto& a : test.attacks) y_test.push_back(index(a));
  }

  std::vector<std::string> modes;
  if (cfg.eval_mode == "both") modes = {"clustering", "probe"};
  else modes = {cfg.eval_mode};

  CommandResult r;
  const std::string hash = cfg.hash();
  for (const auto& mode : modes) {
    downeval::EvalOutcome out;
    if (mode == "clustering") {
      out = downeval::evaluate_clustering(train.embeddings, y_train, test.embeddings, y_test,
                                          classes,
                                          {cfg.eval_seed(), cfg.kmeans_max_iter, cfg.kmeans_restarts},
                                          positive);
    } else {
      out = downeval::evaluate_probe(train.embeddings, y_train, test.embeddings, y_test, classes,
                                     {cfg.probe_epochs, cfg.probe_lr, cfg.eval_seed()}, positive);
    }
    out.report.config_hash = hash;
    nlohmann::json j = out.report.to_json();
    j["task"] = cfg.eval_task;
    ensure_dir(cfg.out_dir);
    write_json(cfg.path("metrics_" + mode + ".json"), j);
    textio::write_file(cfg.path("confusion_" + mode + ".csv"), downeval::confusion_csv(out.report.confusion));
    textio::write_file(cfg.path("roc_" + mode + ".csv"), downeval::roc_csv(*out.report.roc));
    r.written.push_back(cfg.path("metrics_" + mode + ".json"));
    r.written.push_back(cfg.path("confusion_" + mode + ".csv"));
    r.written.push_back(cfg.path("roc_" + mode + ".csv"));
  }
  return r;
}

// ---------------------------------------------------------------------------

GradcheckInstance make_gradcheck_instance(std::uint64_t seed, std::size_t dim) {
  constexpr std::size_t kNodes = 6, kExtra = 6, kFeatures = 4;
  numcore::Rng rng(seed);
  std::vector<std::string> names;
  for (std::size_t v = 0; v < kNodes; ++v) names.push_back("n" + std::to_string(v));
  // A ring keeps every node at two distinct neighbours; random chords add
  // parallel edges and self-loops.
  std::vector<flowdata::FlowEdge> edges;
  for (std::size_t v = 0; v < kNodes; ++v) edges.push_back({v, (v + 1) % kNodes, edges.size()});
  for (std::size_t k = 0; k < kExtra; ++k) {
    edges.push_back({rng.index(kNodes), rng.index(kNodes), edges.size()});
  }
  numcore::Matrix features(edges.size(), kFeatures);
  for (double& x : features.values()) x = rng.normal();

  GradcheckInstance inst;
  inst.graph = flowdata::FlowGraph(names, edges, features, 1);
  negat::EncoderConfig ec;
  ec.proj_dim = dim;
  ec.out_dim = dim;
  ec.edge_feature_dim = kFeatures;
  inst.encoder = negat::EncoderParams::init(ec, seed + 1);
  inst.generator = negsc::GeneratorParams::init(ec.embedding_dim(), dim, seed + 2);
  inst.contrast.centers = 2;
  inst.contrast.neighbors = 2;
  inst.contrast.negatives = 1;
  inst.contrast.seed = seed + 3;
  numcore::Rng batch_rng(inst.contrast.seed);
  inst.batch = negsc::sample_batch(inst.graph, inst.contrast, batch_rng);
  return inst;
}

LossGradCheck check_loss_gradient(const GradcheckInstance& inst, double perturbation,
                                  bool corrupt_gradient) {
  const auto base = negsc::evaluate_loss(inst.graph, inst.encoder, inst.generator, inst.batch,
                                         inst.contrast, nullptr, true);
  LossGradCheck out;
  out.loss = base.terms.total;
  out.analytic = base.encoder_grad->flatten();
  const std::size_t ne = out.analytic.size();
  const auto gg = base.generator_grad->flatten();
  out.analytic.insert(out.analytic.end(), gg.begin(), gg.end());
  if (corrupt_gradient) {
    for (double& a : out.analytic) a *= 2.0;
  }

  auto params = inst.encoder.flatten();
  const auto gp = inst.generator.flatten();
  params.insert(params.end(), gp.begin(), gp.end());
  auto blocks = inst.encoder.blocks();
  const auto gb = inst.generator.blocks(ne);
  blocks.insert(blocks.end(), gb.begin(), gb.end());

  negat::EncoderParams enc = inst.encoder;
  negsc::GeneratorParams gen = inst.generator;
  const negsc::FrozenPlans plans = base.plans;
  auto loss = [&](std::span<const double> x) {
    enc.unflatten(x.subspan(0, ne));
    gen.unflatten(x.subspan(ne));
    return negsc::evaluate_loss(inst.graph, enc, gen, inst.batch, inst.contrast, &plans, false)
        .terms.total;
  };
  out.report = numcore::grad_check(loss, params, out.analytic, blocks, perturbation);
  return out;
}

GradcheckOutcome cmd_gradcheck(const RunConfig& cfg, bool corrupt_gradient) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  const auto inst = make_gradcheck_instance(cfg.gradcheck_seed, cfg.gradcheck_dim);
  auto check = check_loss_gradient(inst, cfg.gradcheck_perturbation, corrupt_gradient);
  GradcheckOutcome o;
  o.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  o.loss = check.loss;
  o.parameter_count = check.analytic.size();
  o.passed = check.report.passed(cfg.gradcheck_tolerance);
  o.report = std::move(check.report);

  nlohmann::json j = {{"format", "flowcontrast-gradcheck/1"},
                      {"config_hash", cfg.hash()},
                      {"seed", cfg.gradcheck_seed},
                      {"dim", cfg.gradcheck_dim},
                      {"perturbation", o.report.perturbation},
                      {"tolerance", cfg.gradcheck_tolerance},
                      {"corrupted", corrupt_gradient},
                      {"loss", o.loss},
                      {"parameters", o.parameter_count},
                      {"global_max_rel_error", o.report.global_max_rel_error},
                      {"passed", o.passed}};
  j["blocks"] = nlohmann::json::array();
  for (const auto& b : o.report.blocks) {
    j["blocks"].push_back(
        {{"name", b.name}, {"max_rel_error", b.max_rel_error}, {"worst_index", b.worst_index}});
  }
  ensure_dir(cfg.out_dir);
  write_json(cfg.path("gradcheck.json"), j);
  o.files.written = {cfg.path("gradcheck.json")};
  return o;
}

}  // namespace flowcontrast::pipeline

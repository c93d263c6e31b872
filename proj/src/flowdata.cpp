#include "flowcontrast/flowdata.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "flowcontrast/errors.hpp"
#include "flowcontrast/textio.hpp"

namespace flowcontrast::flowdata {

using numcore::Matrix;
using textio::format_double;

// ---------------------------------------------------------------------------
// Schema

FeatureSchema FeatureSchema::parse(const std::string& text) {
  const auto kv = textio::parse_key_values(text);
  auto get = [&](const char* key) -> std::string {
    auto it = kv.find(key);
    if (it == kv.end()) throw SchemaError(std::string("schema: missing key '") + key + "'");
    return it->second;
  };
  FeatureSchema s;
  const auto endpoints = textio::split_list(get("endpoints"));
  if (endpoints.size() == 2) {
    s.src_ip = endpoints[0];
    s.dst_ip = endpoints[1];
  } else if (endpoints.size() == 4) {
    s.src_ip = endpoints[0];
    s.src_port = endpoints[1];
    s.dst_ip = endpoints[2];
    s.dst_port = endpoints[3];
  } else {
    throw SchemaError("schema: endpoints must list 2 (ip) or 4 (ip,port) columns");
  }
  if (auto it = kv.find("numeric"); it != kv.end()) s.numeric = textio::split_list(it->second);
  if (auto it = kv.find("categorical"); it != kv.end()) {
    s.categorical = textio::split_list(it->second);
  }
  s.label = get("label");
  s.attack = get("attack");
  if (auto it = kv.find("encoding"); it != kv.end()) {
    if (it->second == "ordinal") {
      s.encoding = CategoricalEncoding::Ordinal;
    } else if (it->second == "onehot") {
      s.encoding = CategoricalEncoding::OneHot;
    } else {
      throw SchemaError("schema: encoding must be 'ordinal' or 'onehot'");
    }
  }
  for (const auto& [key, _] : kv) {
    static const char* known[] = {"endpoints", "numeric", "categorical",
                                  "label",     "attack",  "encoding"};
    if (std::find_if(std::begin(known), std::end(known),
                     [&](const char* k) { return key == k; }) == std::end(known)) {
      throw SchemaError("schema: unknown key '" + key + "'");
    }
  }
  s.validate();
  return s;
}

FeatureSchema FeatureSchema::load(const std::string& path) {
  return parse(textio::read_file(path));
}

FeatureSchema FeatureSchema::netflow_v1() {
  FeatureSchema s;
  s.src_ip = "IPV4_SRC_ADDR";
  s.src_port = "L4_SRC_PORT";
  s.dst_ip = "IPV4_DST_ADDR";
  s.dst_port = "L4_DST_PORT";
  s.numeric = {"IN_BYTES", "OUT_BYTES", "IN_PKTS", "OUT_PKTS", "FLOW_DURATION_MILLISECONDS"};
  s.categorical = {"PROTOCOL", "L7_PROTO", "TCP_FLAGS"};
  s.label = "Label";
  s.attack = "Attack";
  return s;
}

FeatureSchema FeatureSchema::synthetic(std::size_t feature_dim) {
  FeatureSchema s;
  s.src_ip = "IPV4_SRC_ADDR";
  s.src_port = "L4_SRC_PORT";
  s.dst_ip = "IPV4_DST_ADDR";
  s.dst_port = "L4_DST_PORT";
  for (std::size_t i = 0; i < feature_dim; ++i) s.numeric.push_back("FEAT_" + std::to_string(i));
  s.categorical = {"PROTOCOL", "TCP_FLAGS"};
  s.label = "Label";
  s.attack = "Attack";
  return s;
}

std::string FeatureSchema::to_text() const {
  auto join = [](const std::vector<std::string>& xs) {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? ", " : "") + xs[i];
    return out;
  };
  std::vector<std::string> ep = src_port.empty()
                                    ? std::vector<std::string>{src_ip, dst_ip}
                                    : std::vector<std::string>{src_ip, src_port, dst_ip, dst_port};
  std::ostringstream out;
  out << "endpoints = " << join(ep) << "\n";
  out << "numeric = " << join(numeric) << "\n";
  out << "categorical = " << join(categorical) << "\n";
  out << "label = " << label << "\n";
  out << "attack = " << attack << "\n";
  out << "encoding = " << (encoding == CategoricalEncoding::OneHot ? "onehot" : "ordinal") << "\n";
  return out.str();
}

void FeatureSchema::validate() const {
  if (src_ip.empty() || dst_ip.empty()) throw SchemaError("schema: src/dst ip columns required");
  if (src_port.empty() != dst_port.empty()) {
    throw SchemaError("schema: map both port columns or neither");
  }
  if (label.empty() || attack.empty()) throw SchemaError("schema: label and attack required");
  if (numeric.empty() && categorical.empty()) {
    throw SchemaError("schema: at least one feature column required");
  }
  auto cols = columns();
  std::sort(cols.begin(), cols.end());
  if (std::adjacent_find(cols.begin(), cols.end()) != cols.end()) {
    throw SchemaError("schema: a column is mapped to more than one role");
  }
}

std::vector<std::string> FeatureSchema::columns() const {
  std::vector<std::string> cols{src_ip};
  if (!src_port.empty()) cols.push_back(src_port);
  cols.push_back(dst_ip);
  if (!dst_port.empty()) cols.push_back(dst_port);
  cols.insert(cols.end(), categorical.begin(), categorical.end());
  cols.insert(cols.end(), numeric.begin(), numeric.end());
  cols.push_back(label);
  cols.push_back(attack);
  return cols;
}

// ---------------------------------------------------------------------------
// CSV ingestion

bool is_benign(const std::string& attack) {
  std::string lower;
  for (char c : attack) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  return lower == "benign";
}

ParseResult parse_netflow_csv(const std::string& path, const FeatureSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return parse_netflow_csv(in, schema);
}

ParseResult parse_netflow_csv(std::istream& in, const FeatureSchema& schema) {
  schema.validate();
  std::vector<std::string> header;
  if (!textio::read_csv_row(in, header)) throw SchemaError("csv: missing header row");
  for (auto& h : header) h = textio::trim(h);
  if (!header.empty() && header[0].rfind("\xEF\xBB\xBF", 0) == 0) header[0].erase(0, 3);

  std::unordered_map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < header.size(); ++i) pos.emplace(header[i], i);
  auto col = [&](const std::string& name) {
    auto it = pos.find(name);
    if (it == pos.end()) throw SchemaError("csv: mapped column '" + name + "' not in header");
    return it->second;
  };
  const std::size_t c_src = col(schema.src_ip);
  const std::size_t c_dst = col(schema.dst_ip);
  const bool ports = !schema.src_port.empty();
  const std::size_t c_sport = ports ? col(schema.src_port) : 0;
  const std::size_t c_dport = ports ? col(schema.dst_port) : 0;
  const std::size_t c_label = col(schema.label);
  const std::size_t c_attack = col(schema.attack);
  std::vector<std::size_t> c_num, c_cat;
  for (const auto& n : schema.numeric) c_num.push_back(col(n));
  for (const auto& n : schema.categorical) c_cat.push_back(col(n));

  ParseResult result;
  std::vector<std::string> row;
  std::size_t line = 1;
  auto skip = [&](const std::string& why) {
    ++result.skipped;
    if (result.skip_reasons.size() < 20) {
      result.skip_reasons.push_back("row " + std::to_string(line) + ": " + why);
    }
  };
  while (textio::read_csv_row(in, row)) {
    ++line;
    if (row.size() == 1 && textio::trim(row[0]).empty()) continue;
    if (row.size() != header.size()) {
      skip("expected " + std::to_string(header.size()) + " fields, got " +
           std::to_string(row.size()));
      continue;
    }
    FlowRecord r;
    r.src_ip = textio::trim(row[c_src]);
    r.dst_ip = textio::trim(row[c_dst]);
    if (r.src_ip.empty() || r.dst_ip.empty()) {
      skip("empty endpoint");
      continue;
    }
    if (ports) {
      auto sp = textio::parse_int(row[c_sport]);
      auto dp = textio::parse_int(row[c_dport]);
      if (!sp || !dp) {
        skip("non-integer port");
        continue;
      }
      r.src_port = *sp;
      r.dst_port = *dp;
    }
    bool ok = true;
    for (std::size_t k = 0; k < c_num.size() && ok; ++k) {
      auto v = textio::parse_double(row[c_num[k]]);
      if (!v) {
        skip("non-numeric value in '" + schema.numeric[k] + "'");
        ok = false;
      } else {
        r.numeric.push_back(*v);
      }
    }
    if (!ok) continue;
    for (std::size_t c : c_cat) r.categorical.push_back(textio::trim(row[c]));
    auto label = textio::parse_int(row[c_label]);
    if (!label || (*label != 0 && *label != 1)) {
      skip("label must be 0 or 1");
      continue;
    }
    r.label = static_cast<int>(*label);
    r.attack = textio::trim(row[c_attack]);
    if ((r.label == 0) != is_benign(r.attack)) {
      skip("label disagrees with attack category");
      continue;
    }
    result.records.push_back(std::move(r));
  }
  return result;
}

void write_netflow_csv(std::ostream& out, std::span<const FlowRecord> records,
                       const FeatureSchema& schema) {
  const bool ports = !schema.src_port.empty();
  textio::write_csv_row(out, schema.columns());
  std::vector<std::string> row;
  for (const auto& r : records) {
    if (r.numeric.size() != schema.numeric.size() ||
        r.categorical.size() != schema.categorical.size()) {
      throw SchemaError("write_netflow_csv: record does not match schema");
    }
    row.clear();
    row.push_back(r.src_ip);
    if (ports) row.push_back(std::to_string(r.src_port));
    row.push_back(r.dst_ip);
    if (ports) row.push_back(std::to_string(r.dst_port));
    row.insert(row.end(), r.categorical.begin(), r.categorical.end());
    for (double v : r.numeric) row.push_back(format_double(v));
    row.push_back(std::to_string(r.label));
    row.push_back(r.attack);
    textio::write_csv_row(out, row);
  }
}

// ---------------------------------------------------------------------------
// Sampling

namespace {

std::map<std::string, std::vector<std::size_t>> group_by_attack(
    std::span<const FlowRecord> records) {
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < records.size(); ++i) groups[records[i].attack].push_back(i);
  return groups;
}

}  // namespace

std::vector<std::size_t> stratified_downsample_indices(std::span<const FlowRecord> records,
                                                       double fraction, std::uint64_t seed) {
  if (records.empty()) throw InvalidArgument("stratified_downsample: empty input");
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw InvalidArgument("stratified_downsample: fraction must be in (0, 1]");
  }
  numcore::Rng rng(seed);
  std::vector<std::size_t> keep;
  for (const auto& [attack, members] : group_by_attack(records)) {
    const double want = fraction * static_cast<double>(members.size());
    const auto k = std::min<std::size_t>(members.size(),
                                         static_cast<std::size_t>(std::ceil(want - 1e-9)));
    for (std::size_t pick : rng.sample_without_replacement(members.size(), k)) {
      keep.push_back(members[pick]);
    }
  }
  std::sort(keep.begin(), keep.end());
  return keep;
}

std::vector<FlowRecord> stratified_downsample(std::span<const FlowRecord> records,
                                              double fraction, std::uint64_t seed) {
  std::vector<FlowRecord> out;
  for (std::size_t i : stratified_downsample_indices(records, fraction, seed)) {
    out.push_back(records[i]);
  }
  return out;
}

SplitIndices holdout_split(std::span<const FlowRecord> records, double train_ratio,
                           std::uint64_t seed) {
  if (!(train_ratio > 0.0 && train_ratio < 1.0)) {
    throw InvalidArgument("holdout_split: train_ratio must be in (0, 1)");
  }
  numcore::Rng rng(seed);
  SplitIndices split;
  auto groups = group_by_attack(records);

  // Largest-remainder apportionment of the training quota across classes.
  std::vector<std::vector<std::size_t>*> eligible;
  std::size_t eligible_total = 0;
  for (auto& [attack, members] : groups) {
    rng.shuffle(members);
    if (members.size() < 2) {
      split.warnings.push_back("class '" + attack + "' has fewer than 2 records; kept in train");
      split.train.insert(split.train.end(), members.begin(), members.end());
    } else {
      eligible.push_back(&members);
      eligible_total += members.size();
    }
  }
  const auto target = static_cast<std::size_t>(
      std::llround(train_ratio * static_cast<double>(eligible_total)));
  std::vector<std::size_t> quota(eligible.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t g = 0; g < eligible.size(); ++g) {
    const double exact = train_ratio * static_cast<double>(eligible[g]->size());
    quota[g] = static_cast<std::size_t>(std::floor(exact));
    assigned += quota[g];
    remainders.emplace_back(exact - std::floor(exact), g);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t r = 0; assigned < target && r < remainders.size(); ++r, ++assigned) {
    quota[remainders[r].second] += 1;
  }
  for (std::size_t g = 0; g < eligible.size(); ++g) {
    const auto& members = *eligible[g];
    const std::size_t q = std::clamp<std::size_t>(quota[g], 1, members.size() - 1);
    split.train.insert(split.train.end(), members.begin(), members.begin() + q);
    split.test.insert(split.test.end(), members.begin() + q, members.end());
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

// ---------------------------------------------------------------------------
// Standardization

namespace {

std::vector<std::string> ordered_vocabulary(std::vector<std::string> values) {
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  const bool numeric = std::all_of(values.begin(), values.end(), [](const std::string& v) {
    return textio::parse_double(v).has_value();
  });
  if (numeric) {
    std::stable_sort(values.begin(), values.end(), [](const std::string& a, const std::string& b) {
      return *textio::parse_double(a) < *textio::parse_double(b);
    });
  }
  return values;
}

}  // namespace

Matrix Standardizer::encode(std::span<const FlowRecord> records) const {
  Matrix out(records.size(), dimension());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const FlowRecord& r = records[i];
    if (r.numeric.size() != numeric_count || r.categorical.size() != vocabularies.size()) {
      throw SchemaError("standardizer: record does not match fitted schema");
    }
    auto row = out.row(i);
    std::size_t c = 0;
    for (double v : r.numeric) row[c++] = v;
    for (std::size_t k = 0; k < vocabularies.size(); ++k) {
      const auto& vocab = vocabularies[k];
      const auto it = std::find(vocab.begin(), vocab.end(), r.categorical[k]);
      const auto code = static_cast<std::size_t>(it - vocab.begin());  // unseen -> vocab.size()
      if (encoding == CategoricalEncoding::Ordinal) {
        row[c++] = static_cast<double>(code);
      } else {
        if (code < vocab.size()) row[c + code] = 1.0;
        c += vocab.size();
      }
    }
  }
  return out;
}

Matrix Standardizer::scale(const Matrix& encoded) const {
  if (encoded.cols() != dimension()) throw InvalidArgument("standardizer: width mismatch");
  Matrix out = encoded;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto row = out.row(i);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] = (row[c] - mean[c]) / stddev[c];
  }
  return out;
}

Matrix Standardizer::unscale(const Matrix& standardized) const {
  if (standardized.cols() != dimension()) throw InvalidArgument("standardizer: width mismatch");
  Matrix out = standardized;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto row = out.row(i);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] = row[c] * stddev[c] + mean[c];
  }
  return out;
}

Matrix Standardizer::apply(std::span<const FlowRecord> records) const {
  return scale(encode(records));
}

nlohmann::json Standardizer::to_json() const {
  return {{"encoding", encoding == CategoricalEncoding::OneHot ? "onehot" : "ordinal"},
          {"numeric_count", numeric_count},
          {"vocabularies", vocabularies},
          {"columns", column_names},
          {"mean", mean},
          {"stddev", stddev}};
}

Standardizer Standardizer::from_json(const nlohmann::json& j) {
  Standardizer s;
  s.encoding = j.at("encoding").get<std::string>() == "onehot" ? CategoricalEncoding::OneHot
                                                               : CategoricalEncoding::Ordinal;
  s.numeric_count = j.at("numeric_count").get<std::size_t>();
  s.vocabularies = j.at("vocabularies").get<std::vector<std::vector<std::string>>>();
  s.column_names = j.at("columns").get<std::vector<std::string>>();
  s.mean = j.at("mean").get<std::vector<double>>();
  s.stddev = j.at("stddev").get<std::vector<double>>();
  if (s.mean.size() != s.dimension() || s.stddev.size() != s.dimension()) {
    throw SchemaError("standardizer json: inconsistent widths");
  }
  return s;
}

Standardizer fit_standardizer(std::span<const FlowRecord> train, const FeatureSchema& schema) {
  if (train.empty()) throw InvalidArgument("fit_standardizer: no training records");
  Standardizer s;
  s.encoding = schema.encoding;
  s.numeric_count = schema.numeric.size();
  s.column_names = schema.numeric;
  for (std::size_t k = 0; k < schema.categorical.size(); ++k) {
    std::vector<std::string> values;
    values.reserve(train.size());
    for (const auto& r : train) values.push_back(r.categorical.at(k));
    s.vocabularies.push_back(ordered_vocabulary(std::move(values)));
    if (s.encoding == CategoricalEncoding::Ordinal) {
      s.column_names.push_back(schema.categorical[k]);
    } else {
      for (const auto& v : s.vocabularies.back()) {
        s.column_names.push_back(schema.categorical[k] + "=" + v);
      }
    }
  }
  const Matrix enc = s.encode(train);
  const auto n = static_cast<double>(enc.rows());
  s.mean.assign(enc.cols(), 0.0);
  s.stddev.assign(enc.cols(), 0.0);
  for (std::size_t i = 0; i < enc.rows(); ++i) {
    for (std::size_t c = 0; c < enc.cols(); ++c) s.mean[c] += enc(i, c);
  }
  for (double& m : s.mean) m /= n;
  for (std::size_t i = 0; i < enc.rows(); ++i) {
    for (std::size_t c = 0; c < enc.cols(); ++c) {
      const double d = enc(i, c) - s.mean[c];
      s.stddev[c] += d * d;
    }
  }
  for (std::size_t c = 0; c < enc.cols(); ++c) {
    s.stddev[c] = std::sqrt(s.stddev[c] / n);
    if (!(s.stddev[c] > 1e-12)) {
      s.warnings.push_back("column '" + s.column_names[c] + "' has zero variance");
      s.stddev[c] = 1.0;
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Graph

NodeKey parse_node_key(const std::string& s) {
  if (s == "ip") return NodeKey::Ip;
  if (s == "ip:port") return NodeKey::IpPort;
  throw ConfigError("node_key must be 'ip' or 'ip:port'");
}

std::string to_string(NodeKey k) { return k == NodeKey::Ip ? "ip" : "ip:port"; }

Adjacency::Adjacency(std::size_t node_count,
                     std::span<const std::pair<std::size_t, std::size_t>> edges) {
  std::vector<std::size_t> deg(node_count, 0);
  for (const auto& [s, d] : edges) {
    if (s >= node_count || d >= node_count) throw InvalidArgument("Adjacency: node out of range");
    ++deg[s];
    ++deg[d];
  }
  offsets_.assign(node_count + 1, 0);
  for (std::size_t v = 0; v < node_count; ++v) offsets_[v + 1] = offsets_[v] + deg[v];
  items_.resize(offsets_.back());
  std::vector<std::size_t> cursor(offsets_.begin(), offsets_.end() - 1);
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const auto [s, d] = edges[e];
    items_[cursor[s]++] = {e, d};
    items_[cursor[d]++] = {e, s};
  }
}

FlowGraph::FlowGraph(std::vector<std::string> nodes, std::vector<FlowEdge> edges,
                     Matrix edge_features, std::size_t node_feature_dim)
    : nodes_(std::move(nodes)),
      edges_(std::move(edges)),
      edge_features_(std::move(edge_features)),
      node_feature_dim_(node_feature_dim) {
  if (edge_features_.rows() != edges_.size()) {
    throw InvalidArgument("FlowGraph: one feature row per edge required");
  }
  if (node_feature_dim_ == 0) throw InvalidArgument("FlowGraph: node feature dim must be >= 1");
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  pairs.reserve(edges_.size());
  for (const auto& e : edges_) {
    if (e.src >= nodes_.size() || e.dst >= nodes_.size()) {
      throw InvalidArgument("FlowGraph: edge endpoint out of range");
    }
    pairs.emplace_back(e.src, e.dst);
  }
  adjacency_ = Adjacency(nodes_.size(), pairs);
}

Matrix FlowGraph::node_features() const { return Matrix(nodes_.size(), node_feature_dim_, 1.0); }

std::span<const Incidence> FlowGraph::incident(std::size_t v) const {
  if (v >= nodes_.size()) throw InvalidArgument("FlowGraph: node out of range");
  return adjacency_.incident(v);
}

std::vector<std::size_t> FlowGraph::distinct_neighbors(std::size_t v) const {
  std::vector<std::size_t> out;
  for (const auto& inc : incident(v)) {
    if (inc.neighbor != v) out.push_back(inc.neighbor);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

FlowGraph build_graph(std::span<const FlowRecord> records, const Matrix& features,
                      NodeKey node_key, std::size_t node_feature_dim) {
  if (features.rows() != records.size()) {
    throw InvalidArgument("build_graph: feature rows must match records");
  }
  std::vector<std::string> nodes;
  std::unordered_map<std::string, std::size_t> index;
  auto node_of = [&](const std::string& ip, std::int64_t port) {
    std::string key = node_key == NodeKey::Ip ? ip : ip + ":" + std::to_string(port);
    auto [it, inserted] = index.emplace(key, nodes.size());
    if (inserted) nodes.push_back(std::move(key));
    return it->second;
  };
  std::vector<FlowEdge> edges;
  edges.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const std::size_t s = node_of(records[i].src_ip, records[i].src_port);
    const std::size_t d = node_of(records[i].dst_ip, records[i].dst_port);
    edges.push_back({s, d, i});
  }
  FlowGraph g(std::move(nodes), std::move(edges), features, node_feature_dim);
  for (const auto& r : records) {
    g.edge_labels.push_back(r.label);
    g.edge_attacks.push_back(r.attack);
  }
  return g;
}

void write_graph(const FlowGraph& g, const std::string& edges_csv, const std::string& meta_json,
                 const std::vector<std::string>& feature_names, const std::string& config_hash) {
  std::ostringstream out;
  std::vector<std::string> header{"edge", "src", "dst", "record", "label", "attack"};
  for (std::size_t c = 0; c < g.edge_feature_dim(); ++c) header.push_back("f" + std::to_string(c));
  textio::write_csv_row(out, header);
  const bool has_truth = g.edge_labels.size() == g.edge_count();
  for (std::size_t e = 0; e < g.edge_count(); ++e) {
    const auto& edge = g.edge(e);
    std::vector<std::string> row{std::to_string(e), std::to_string(edge.src),
                                 std::to_string(edge.dst), std::to_string(edge.record),
                                 has_truth ? std::to_string(g.edge_labels[e]) : "",
                                 has_truth ? g.edge_attacks[e] : ""};
    for (double v : g.edge_features().row(e)) row.push_back(format_double(v));
    textio::write_csv_row(out, row);
  }
  textio::write_file(edges_csv, out.str());

  nlohmann::json meta = {{"format", "flowcontrast-graph/1"},
                         {"config_hash", config_hash},
                         {"node_count", g.node_count()},
                         {"edge_count", g.edge_count()},
                         {"node_feature_dim", g.node_feature_dim()},
                         {"edge_feature_dim", g.edge_feature_dim()},
                         {"feature_names", feature_names},
                         {"nodes", g.node_names()}};
  textio::write_file(meta_json, meta.dump(2) + "\n");
}

FlowGraph read_graph(const std::string& edges_csv, const std::string& meta_json) {
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(textio::read_file(meta_json));
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("graph metadata: ") + e.what());
  }
  const auto nodes = meta.at("nodes").get<std::vector<std::string>>();
  const auto fe = meta.at("edge_feature_dim").get<std::size_t>();
  const auto fv = meta.at("node_feature_dim").get<std::size_t>();

  std::istringstream in(textio::read_file(edges_csv));
  std::vector<std::string> row;
  if (!textio::read_csv_row(in, row) || row.size() != 6 + fe) {
    throw SchemaError("graph edges: unexpected header");
  }
  std::vector<FlowEdge> edges;
  std::vector<std::vector<double>> feats;
  std::vector<int> labels;
  std::vector<std::string> attacks;
  bool truth = true;
  while (textio::read_csv_row(in, row)) {
    if (row.size() != 6 + fe) throw SchemaError("graph edges: ragged row");
    auto s = textio::parse_int(row[1]);
    auto d = textio::parse_int(row[2]);
    auto rec = textio::parse_int(row[3]);
    if (!s || !d || !rec) throw SchemaError("graph edges: bad endpoint");
    edges.push_back({static_cast<std::size_t>(*s), static_cast<std::size_t>(*d),
                     static_cast<std::size_t>(*rec)});
    if (auto l = textio::parse_int(row[4])) {
      labels.push_back(static_cast<int>(*l));
      attacks.push_back(row[5]);
    } else {
      truth = false;
    }
    std::vector<double> f;
    for (std::size_t c = 0; c < fe; ++c) {
      auto v = textio::parse_double(row[6 + c]);
      if (!v) throw SchemaError("graph edges: bad feature value");
      f.push_back(*v);
    }
    feats.push_back(std::move(f));
  }
  Matrix m(feats.size(), fe);
  for (std::size_t e = 0; e < feats.size(); ++e) std::copy(feats[e].begin(), feats[e].end(), m.row(e).begin());
  FlowGraph g(nodes, std::move(edges), std::move(m), fv);
  if (truth) {
    g.edge_labels = std::move(labels);
    g.edge_attacks = std::move(attacks);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Planted-class synthetic flows

std::string synth_attack_name(std::size_t cls) {
  return cls == 0 ? "Benign" : "Attack" + std::to_string(cls);
}

std::vector<FlowRecord> synth_dataset(const SynthConfig& cfg) {
  if (cfg.classes < 2) throw InvalidArgument("synth_dataset: need at least 2 classes");
  if (cfg.edges < cfg.classes) throw InvalidArgument("synth_dataset: edges < classes");
  if (cfg.nodes < cfg.classes) throw InvalidArgument("synth_dataset: nodes < classes");
  if (cfg.feature_dim < cfg.classes) {
    throw InvalidArgument("synth_dataset: feature_dim must be >= classes");
  }
  if (!(cfg.separation >= 0.0)) throw InvalidArgument("synth_dataset: separation must be >= 0");
  numcore::Rng rng(cfg.seed);

  // Node k belongs to community floor(k * C / n).
  std::vector<std::vector<std::size_t>> community(cfg.classes);
  for (std::size_t k = 0; k < cfg.nodes; ++k) community[k * cfg.classes / cfg.nodes].push_back(k);
  auto ip = [](std::size_t k) {
    return "10.0." + std::to_string(k / 256) + "." + std::to_string(k % 256);
  };
  // Class means sit on scaled basis vectors so every pair is `separation` apart.
  const double offset = cfg.separation / std::sqrt(2.0);

  std::vector<std::size_t> classes(cfg.edges);
  for (std::size_t i = 0; i < cfg.edges; ++i) classes[i] = i % cfg.classes;
  rng.shuffle(classes);

  static const char* protocols[] = {"6", "17", "1"};
  static const char* flags[] = {"2", "16", "18", "24", "27"};
  static const std::int64_t service_ports[] = {22, 53, 80, 443, 8080};

  std::vector<std::size_t> all_nodes(cfg.nodes);
  std::iota(all_nodes.begin(), all_nodes.end(), 0);

  std::vector<FlowRecord> out;
  out.reserve(cfg.edges);
  for (std::size_t i = 0; i < cfg.edges; ++i) {
    const std::size_t c = classes[i];
    const auto& pool = rng.uniform() < cfg.community_bias ? community[c] : all_nodes;
    const std::size_t s = pool[rng.index(pool.size())];
    std::size_t d = pool[rng.index(pool.size())];
    while (pool.size() > 1 && d == s) d = pool[rng.index(pool.size())];

    FlowRecord r;
    r.src_ip = ip(s);
    r.dst_ip = ip(d);
    r.src_port = 1024 + static_cast<std::int64_t>(rng.index(64512));
    r.dst_port = service_ports[rng.index(std::size(service_ports))];
    r.categorical = {protocols[rng.index(std::size(protocols))], flags[rng.index(std::size(flags))]};
    r.numeric.resize(cfg.feature_dim);
    for (std::size_t f = 0; f < cfg.feature_dim; ++f) {
      r.numeric[f] = rng.normal() + (f == c ? offset : 0.0);
    }
    r.label = c == 0 ? 0 : 1;
    r.attack = synth_attack_name(c);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace flowcontrast::flowdata

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "flowcontrast/numcore.hpp"

namespace flowcontrast::flowdata {

enum class CategoricalEncoding { Ordinal, OneHot };

/// Maps CSV column names onto record roles.
///
/// Key-value form:
///   endpoints   = SRC_IP, SRC_PORT, DST_IP, DST_PORT   (ports optional: two entries)
///   numeric     = IN_BYTES, OUT_BYTES, ...
///   categorical = PROTOCOL, TCP_FLAGS
///   label       = Label
///   attack      = Attack
///   encoding    = ordinal | onehot                     (optional)
struct FeatureSchema {
  std::string src_ip;
  std::string src_port;  // empty when ports are not mapped
  std::string dst_ip;
  std::string dst_port;
  std::vector<std::string> numeric;
  std::vector<std::string> categorical;
  std::string label;
  std::string attack;
  CategoricalEncoding encoding = CategoricalEncoding::Ordinal;

  static FeatureSchema parse(const std::string& text);
  static FeatureSchema load(const std::string& path);
  /// The eight-feature NetFlow v1 layout used by the NF-* datasets.
  static FeatureSchema netflow_v1();
  /// Layout written by synth_dataset.
  static FeatureSchema synthetic(std::size_t feature_dim);

  std::string to_text() const;
  void validate() const;
  /// Ordered list of CSV columns this schema reads or writes.
  std::vector<std::string> columns() const;
};

struct FlowRecord {
  std::string src_ip;
  std::string dst_ip;
  std::int64_t src_port = 0;
  std::int64_t dst_port = 0;
  std::vector<std::string> categorical;
  std::vector<double> numeric;
  int label = 0;
  std::string attack;
};

struct ParseResult {
  std::vector<FlowRecord> records;
  std::size_t skipped = 0;
  std::vector<std::string> skip_reasons;  // first few only
};

bool is_benign(const std::string& attack);

ParseResult parse_netflow_csv(const std::string& path, const FeatureSchema& schema);
ParseResult parse_netflow_csv(std::istream& in, const FeatureSchema& schema);

void write_netflow_csv(std::ostream& out, std::span<const FlowRecord> records,
                       const FeatureSchema& schema);

// ---------------------------------------------------------------------------
// Sampling and splitting. Index-returning forms keep the original order.

std::vector<std::size_t> stratified_downsample_indices(std::span<const FlowRecord> records,
                                                       double fraction, std::uint64_t seed);
std::vector<FlowRecord> stratified_downsample(std::span<const FlowRecord> records,
                                              double fraction, std::uint64_t seed);

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  std::vector<std::string> warnings;
};

SplitIndices holdout_split(std::span<const FlowRecord> records, double train_ratio,
                           std::uint64_t seed);

// ---------------------------------------------------------------------------

/// Categorical vocabularies plus per-column mean and population standard
/// deviation, fitted on training records only.
struct Standardizer {
  CategoricalEncoding encoding = CategoricalEncoding::Ordinal;
  std::size_t numeric_count = 0;
  std::vector<std::vector<std::string>> vocabularies;  // one per categorical column
  std::vector<std::string> column_names;
  std::vector<double> mean;
  std::vector<double> stddev;
  std::vector<std::string> warnings;

  std::size_t dimension() const { return column_names.size(); }

  /// Encoded but unscaled features.
  numcore::Matrix encode(std::span<const FlowRecord> records) const;
  numcore::Matrix apply(std::span<const FlowRecord> records) const;
  numcore::Matrix scale(const numcore::Matrix& encoded) const;
  numcore::Matrix unscale(const numcore::Matrix& standardized) const;

  nlohmann::json to_json() const;
  static Standardizer from_json(const nlohmann::json& j);
};

Standardizer fit_standardizer(std::span<const FlowRecord> train, const FeatureSchema& schema);
inline numcore::Matrix apply_standardizer(const Standardizer& s,
                                          std::span<const FlowRecord> records) {
  return s.apply(records);
}

// ---------------------------------------------------------------------------

enum class NodeKey { Ip, IpPort };
NodeKey parse_node_key(const std::string& s);
std::string to_string(NodeKey k);

struct FlowEdge {
  std::size_t src = 0;
  std::size_t dst = 0;
  std::size_t record = 0;  // index into the records the graph was built from
};

struct Incidence {
  std::size_t edge = 0;
  std::size_t neighbor = 0;
};

/// Compressed incidence lists over an undirected edge list. Each edge appears
/// once in each endpoint's list (so a self-loop appears twice).
class Adjacency {
 public:
  Adjacency() = default;
  Adjacency(std::size_t node_count, std::span<const std::pair<std::size_t, std::size_t>> edges);

  std::size_t node_count() const noexcept { return offsets_.empty() ? 0 : offsets_.size() - 1; }
  std::span<const Incidence> incident(std::size_t v) const {
    return {items_.data() + offsets_[v], offsets_[v + 1] - offsets_[v]};
  }
  std::size_t total_incidences() const noexcept { return items_.size(); }
  /// Position of node v's first incidence in the flattened list.
  std::size_t offset(std::size_t v) const { return offsets_[v]; }

 private:
  std::vector<std::size_t> offsets_;
  std::vector<Incidence> items_;
};

/// Undirected multigraph of endpoints, one edge per flow. A self-loop appears
/// twice in its node's incidence list. Immutable after construction.
class FlowGraph {
 public:
  FlowGraph() = default;
  FlowGraph(std::vector<std::string> nodes, std::vector<FlowEdge> edges,
            numcore::Matrix edge_features, std::size_t node_feature_dim = 1);

  std::size_t node_count() const noexcept { return nodes_.size(); }
  std::size_t edge_count() const noexcept { return edges_.size(); }
  std::size_t node_feature_dim() const noexcept { return node_feature_dim_; }
  std::size_t edge_feature_dim() const noexcept { return edge_features_.cols(); }

  const std::string& node_name(std::size_t v) const { return nodes_.at(v); }
  const std::vector<std::string>& node_names() const noexcept { return nodes_; }
  const FlowEdge& edge(std::size_t e) const { return edges_.at(e); }
  const std::vector<FlowEdge>& edges() const noexcept { return edges_; }
  const numcore::Matrix& edge_features() const noexcept { return edge_features_; }
  /// All-ones node features, n x F_V.
  numcore::Matrix node_features() const;

  std::span<const Incidence> incident(std::size_t v) const;
  const Adjacency& adjacency() const noexcept { return adjacency_; }
  std::size_t degree(std::size_t v) const { return incident(v).size(); }
  /// Distinct neighbours other than v itself, ascending.
  std::vector<std::size_t> distinct_neighbors(std::size_t v) const;

  // Optional per-edge ground truth carried for evaluation.
  std::vector<int> edge_labels;
  std::vector<std::string> edge_attacks;

 private:
  std::vector<std::string> nodes_;
  std::vector<FlowEdge> edges_;
  numcore::Matrix edge_features_;
  std::size_t node_feature_dim_ = 1;
  Adjacency adjacency_;
};

FlowGraph build_graph(std::span<const FlowRecord> records, const numcore::Matrix& features,
                      NodeKey node_key = NodeKey::Ip, std::size_t node_feature_dim = 1);

/// Debug dump: CSV edge list (edge,src,dst,record,label,attack,f0..) and JSON
/// metadata (nodes, dimensions, feature names, config hash).
void write_graph(const FlowGraph& g, const std::string& edges_csv, const std::string& meta_json,
                 const std::vector<std::string>& feature_names, const std::string& config_hash);
FlowGraph read_graph(const std::string& edges_csv, const std::string& meta_json);

// ---------------------------------------------------------------------------

struct SynthConfig {
  std::size_t classes = 3;
  std::size_t nodes = 60;
  std::size_t edges = 600;
  double separation = 6.0;  // distance between class means, in units of sigma
  std::size_t feature_dim = 8;
  double community_bias = 0.97;  // probability both endpoints come from the class community
  std::uint64_t seed = 7;
};

std::string synth_attack_name(std::size_t cls);
std::vector<FlowRecord> synth_dataset(const SynthConfig& cfg);

}  // namespace flowcontrast::flowdata

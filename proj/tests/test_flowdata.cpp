#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>

#include "flowcontrast/errors.hpp"
#include "flowcontrast/flowdata.hpp"
#include "flowcontrast/textio.hpp"

using namespace flowcontrast;
using namespace flowcontrast::flowdata;

namespace {

const char* kHeader =
    "IPV4_SRC_ADDR,L4_SRC_PORT,IPV4_DST_ADDR,L4_DST_PORT,PROTOCOL,L7_PROTO,IN_BYTES,OUT_BYTES,"
    "IN_PKTS,OUT_PKTS,TCP_FLAGS,FLOW_DURATION_MILLISECONDS,Label,Attack\n";

FlowRecord rec(const std::string& s, const std::string& d, std::vector<double> num,
               const std::string& attack = "Benign") {
  FlowRecord r;
  r.src_ip = s;
  r.dst_ip = d;
  r.numeric = std::move(num);
  r.attack = attack;
  r.label = is_benign(attack) ? 0 : 1;
  return r;
}

FeatureSchema numeric_schema(std::size_t k) {
  FeatureSchema s;
  s.src_ip = "src";
  s.dst_ip = "dst";
  for (std::size_t i = 0; i < k; ++i) s.numeric.push_back("x" + std::to_string(i));
  s.label = "Label";
  s.attack = "Attack";
  return s;
}

std::vector<FlowRecord> groups(std::size_t per_group, std::vector<std::string> names) {
  std::vector<FlowRecord> out;
  for (std::size_t i = 0; i < per_group; ++i) {
    for (const auto& n : names) out.push_back(rec("a", "b", {double(i)}, n));
  }
  return out;
}

}  // namespace

// --- textio -----------------------------------------------------------------

TEST_CASE("csv rows: quoting and embedded newlines round-trip") {
  std::ostringstream out;
  textio::write_csv_row(out, {"plain", "with,comma", "with \"quote\"", "two\nlines", ""});
  std::istringstream in(out.str());
  std::vector<std::string> fields;
  REQUIRE(textio::read_csv_row(in, fields));
  CHECK(fields == std::vector<std::string>{"plain", "with,comma", "with \"quote\"", "two\nlines", ""});
  CHECK_FALSE(textio::read_csv_row(in, fields));
}

TEST_CASE("number formatting round-trips") {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0}) {
    CHECK(*textio::parse_double(textio::format_double(v)) == v);
  }
  CHECK_FALSE(textio::parse_double("12abc").has_value());
  CHECK_FALSE(textio::parse_double("").has_value());
  CHECK(*textio::parse_int(" 42 ") == 42);
  CHECK_FALSE(textio::parse_int("4.2").has_value());
}

TEST_CASE("key value files ignore comments and blanks") {
  const auto kv = textio::parse_key_values("# comment\n\n a = 1 \nb=two words\n");
  CHECK(kv.size() == 2);
  CHECK(kv.at("a") == "1");
  CHECK(kv.at("b") == "two words");
  CHECK(textio::fnv1a_hex("") == "cbf29ce484222325");
}

// --- schema and parsing -----------------------------------------------------

TEST_CASE("schema parses from key-value text") {
  const auto s = FeatureSchema::parse(
      "endpoints = SRC, DST\nnumeric = A, B\ncategorical = P\nlabel = Label\nattack = Attack\n"
      "encoding = onehot\n");
  CHECK(s.src_ip == "SRC");
  CHECK(s.src_port.empty());
  CHECK(s.numeric == std::vector<std::string>{"A", "B"});
  CHECK(s.encoding == CategoricalEncoding::OneHot);
  CHECK(FeatureSchema::parse(s.to_text()).columns() == s.columns());
  CHECK_THROWS_AS(FeatureSchema::parse("endpoints = A\nnumeric = x\nlabel = l\nattack = a\n"),
                  SchemaError);
  CHECK_THROWS_AS(FeatureSchema::parse("endpoints = A, B\nlabel = l\nattack = a\n"), SchemaError);
}

TEST_CASE("three valid rows give three records") {
  std::istringstream in(std::string(kHeader) +
                        "10.0.0.1,1234,10.0.0.2,80,6,7,100,200,1,2,24,5,0,Benign\n"
                        "10.0.0.2,1235,10.0.0.3,443,6,91,300,10,3,1,27,0,0,Benign\n"
                        "10.0.0.3,999,10.0.0.1,53,17,5,42,0,1,0,0,1,0,Benign\n");
  const auto r = parse_netflow_csv(in, FeatureSchema::netflow_v1());
  CHECK(r.records.size() == 3);
  CHECK(r.skipped == 0);
  CHECK(r.records[1].numeric[0] == 300.0);
  CHECK(r.records[1].categorical == std::vector<std::string>{"6", "91", "27"});
  CHECK(r.records[2].dst_port == 53);
}

TEST_CASE("row with a non-numeric byte count is skipped") {
  std::istringstream in(std::string(kHeader) +
                        "10.0.0.1,1234,10.0.0.2,80,6,7,lots,200,1,2,24,5,0,Benign\n"
                        "10.0.0.2,1235,10.0.0.3,443,6,91,300,10,3,1,27,0,0,Benign\n");
  const auto r = parse_netflow_csv(in, FeatureSchema::netflow_v1());
  CHECK(r.records.size() == 1);
  CHECK(r.skipped == 1);
  REQUIRE(r.skip_reasons.size() == 1);
  CHECK(r.skip_reasons[0].find("IN_BYTES") != std::string::npos);
}

TEST_CASE("attack and label pass through") {
  std::istringstream in(std::string(kHeader) +
                        "10.0.0.9,1234,10.0.0.2,80,6,7,1,2,1,2,24,5,1,DDoS\n");
  const auto r = parse_netflow_csv(in, FeatureSchema::netflow_v1());
  REQUIRE(r.records.size() == 1);
  CHECK(r.records[0].attack == "DDoS");
  CHECK(r.records[0].label == 1);
}

TEST_CASE("label and attack must agree") {
  std::istringstream in(std::string(kHeader) +
                        "10.0.0.9,1234,10.0.0.2,80,6,7,1,2,1,2,24,5,0,DDoS\n"
                        "10.0.0.9,1234,10.0.0.2,80,6,7,1,2,1,2,24,5,1,Benign\n");
  const auto r = parse_netflow_csv(in, FeatureSchema::netflow_v1());
  CHECK(r.records.empty());
  CHECK(r.skipped == 2);
}

TEST_CASE("missing mapped column and missing file") {
  std::istringstream in("IPV4_SRC_ADDR,IPV4_DST_ADDR,Label\n1,2,0\n");
  CHECK_THROWS_AS(parse_netflow_csv(in, FeatureSchema::netflow_v1()), SchemaError);
  CHECK_THROWS_AS(parse_netflow_csv("/nonexistent/flows.csv", FeatureSchema::netflow_v1()),
                  IoError);
}

TEST_CASE("write then parse recovers the records") {
  const auto recs = synth_dataset({.classes = 3, .nodes = 20, .edges = 50, .seed = 3});
  const auto schema = FeatureSchema::synthetic(8);
  std::stringstream io;
  write_netflow_csv(io, recs, schema);
  const auto back = parse_netflow_csv(io, schema);
  REQUIRE(back.records.size() == recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    CHECK(back.records[i].src_ip == recs[i].src_ip);
    CHECK(back.records[i].numeric == recs[i].numeric);
    CHECK(back.records[i].attack == recs[i].attack);
    CHECK(back.records[i].categorical == recs[i].categorical);
  }
}

// --- sampling ---------------------------------------------------------------

TEST_CASE("downsample with fraction 1 keeps everything") {
  const auto recs = groups(17, {"Benign", "DDoS", "Scan"});
  const auto idx = stratified_downsample_indices(recs, 1.0, 5);
  CHECK(idx.size() == recs.size());
  std::vector<std::size_t> sorted = idx;
  std::sort(sorted.begin(), sorted.end());
  CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
}

TEST_CASE("downsample takes ceil(fraction * group) per group") {
  const auto recs = groups(100, {"Benign", "DDoS"});
  const auto out = stratified_downsample(recs, 0.1, 1);
  std::map<std::string, int> counts;
  for (const auto& r : out) ++counts[r.attack];
  CHECK(counts["Benign"] == 10);
  CHECK(counts["DDoS"] == 10);

  auto uneven = groups(7, {"Benign"});
  for (auto& r : groups(3, {"Scan"})) uneven.push_back(r);
  std::map<std::string, int> c2;
  for (const auto& r : stratified_downsample(uneven, 0.5, 1)) ++c2[r.attack];
  CHECK(c2["Benign"] == 4);
  CHECK(c2["Scan"] == 2);
}

TEST_CASE("downsample is seeded") {
  const auto recs = groups(100, {"Benign", "DDoS"});
  const auto a = stratified_downsample_indices(recs, 0.2, 9);
  CHECK(a == stratified_downsample_indices(recs, 0.2, 9));
  for (std::uint64_t s = 10; s < 15; ++s) CHECK(a != stratified_downsample_indices(recs, 0.2, s));
}

TEST_CASE("downsample keeps every category and rejects bad input") {
  const auto recs = groups(10, {"Benign", "DDoS", "Scan", "Worm"});
  std::set<std::string> cats;
  for (const auto& r : stratified_downsample(recs, 0.1, 2)) cats.insert(r.attack);
  CHECK(cats.size() == 4);
  CHECK_THROWS_AS(stratified_downsample(std::vector<FlowRecord>{}, 0.5, 1), InvalidArgument);
  CHECK_THROWS_AS(stratified_downsample(recs, 0.0, 1), InvalidArgument);
  CHECK_THROWS_AS(stratified_downsample(recs, 1.5, 1), InvalidArgument);
}

TEST_CASE("holdout split: 70/30, disjoint, exhaustive, stratified") {
  std::vector<FlowRecord> recs;
  for (int i = 0; i < 60; ++i) recs.push_back(rec("a", "b", {double(i)}, "Benign"));
  for (int i = 0; i < 40; ++i) recs.push_back(rec("a", "b", {double(i)}, "DDoS"));
  const auto split = holdout_split(recs, 0.7, 4);
  CHECK(split.train.size() == 70);
  CHECK(split.test.size() == 30);
  std::set<std::size_t> tr(split.train.begin(), split.train.end());
  std::set<std::size_t> te(split.test.begin(), split.test.end());
  for (std::size_t i : te) CHECK(tr.count(i) == 0);
  CHECK(tr.size() + te.size() == recs.size());
  int benign = 0;
  for (std::size_t i : split.train) benign += recs[i].attack == "Benign";
  CHECK(std::abs(benign - 0.6 * 70) <= 1.0);
  CHECK(split.warnings.empty());
}

TEST_CASE("holdout split sends singleton classes to train with a warning") {
  auto recs = groups(10, {"Benign"});
  recs.push_back(rec("x", "y", {0.0}, "Rare"));
  const auto split = holdout_split(recs, 0.7, 4);
  CHECK(std::find(split.train.begin(), split.train.end(), recs.size() - 1) != split.train.end());
  CHECK(split.warnings.size() == 1);
  CHECK_THROWS_AS(holdout_split(recs, 1.0, 1), InvalidArgument);
  CHECK_THROWS_AS(holdout_split(recs, 0.0, 1), InvalidArgument);
}

// --- standardizer -----------------------------------------------------------

TEST_CASE("standardizer uses the population deviation") {
  const std::vector<FlowRecord> train{rec("a", "b", {1}), rec("a", "b", {2}), rec("a", "b", {3})};
  const auto s = fit_standardizer(train, numeric_schema(1));
  const auto x = s.apply(train);
  CHECK(std::abs(x(0, 0) + 1.224744871391589) < 1e-12);
  CHECK(std::abs(x(1, 0)) < 1e-15);
  CHECK(std::abs(x(2, 0) - 1.224744871391589) < 1e-12);
  // a test row at the train mean maps to zero
  CHECK(s.apply(std::vector<FlowRecord>{rec("c", "d", {2})})(0, 0) == 0.0);
}

TEST_CASE("constant column becomes zeros with a warning") {
  const std::vector<FlowRecord> train{rec("a", "b", {5, 1}), rec("a", "b", {5, 2}),
                                      rec("a", "b", {5, 4})};
  const auto s = fit_standardizer(train, numeric_schema(2));
  const auto x = s.apply(train);
  for (std::size_t i = 0; i < 3; ++i) CHECK(x(i, 0) == 0.0);
  CHECK(s.warnings.size() == 1);
  CHECK(s.stddev[0] == 1.0);
}

TEST_CASE("standardized train columns have mean 0 and variance 1") {
  const auto recs = synth_dataset({.classes = 3, .nodes = 30, .edges = 300, .seed = 11});
  const auto schema = FeatureSchema::synthetic(8);
  const auto s = fit_standardizer(recs, schema);
  const auto x = s.apply(recs);
  CHECK(x.cols() == 10);  // 8 numeric + 2 ordinal categorical
  for (std::size_t c = 0; c < x.cols(); ++c) {
    double m = 0, v = 0;
    for (std::size_t i = 0; i < x.rows(); ++i) m += x(i, c);
    m /= double(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) v += (x(i, c) - m) * (x(i, c) - m);
    v /= double(x.rows());
    CHECK(std::abs(m) < 1e-9);
    CHECK(std::abs(v - 1.0) < 1e-6);
  }
}

TEST_CASE("standardizer round-trips and serializes") {
  const auto recs = synth_dataset({.classes = 2, .nodes = 10, .edges = 40, .feature_dim = 4, .seed = 2});
  auto schema = FeatureSchema::synthetic(4);
  for (auto enc : {CategoricalEncoding::Ordinal, CategoricalEncoding::OneHot}) {
    schema.encoding = enc;
    const auto s = fit_standardizer(recs, schema);
    const auto raw = s.encode(recs);
    const auto back = s.unscale(s.scale(raw));
    for (std::size_t i = 0; i < raw.size(); ++i) {
      CHECK(std::abs(back.values()[i] - raw.values()[i]) < 1e-9);
    }
    const auto s2 = Standardizer::from_json(s.to_json());
    CHECK(s2.apply(recs) == s.apply(recs));
  }
}

TEST_CASE("one-hot widens categorical columns") {
  std::vector<FlowRecord> train;
  for (const char* p : {"6", "17", "6", "1"}) {
    auto r = rec("a", "b", {1.0});
    r.categorical = {p};
    train.push_back(r);
  }
  auto schema = numeric_schema(1);
  schema.categorical = {"proto"};
  schema.encoding = CategoricalEncoding::OneHot;
  CHECK(fit_standardizer(train, schema).dimension() == 4);
  schema.encoding = CategoricalEncoding::Ordinal;
  CHECK(fit_standardizer(train, schema).dimension() == 2);
}

// --- graph ------------------------------------------------------------------

TEST_CASE("graph: chain A-B-C") {
  const std::vector<FlowRecord> r{rec("A", "B", {1}), rec("B", "C", {2})};
  const auto g = build_graph(r, numcore::Matrix{{1}, {2}});
  CHECK(g.node_count() == 3);
  CHECK(g.edge_count() == 2);
  std::size_t b = 0;
  for (std::size_t v = 0; v < 3; ++v) {
    if (g.node_name(v) == "B") b = v;
  }
  CHECK(g.degree(b) == 2);
  CHECK(g.distinct_neighbors(b).size() == 2);
}

TEST_CASE("graph: parallel flows stay distinct edges") {
  const std::vector<FlowRecord> r{rec("A", "B", {1}), rec("A", "B", {2})};
  const auto g = build_graph(r, numcore::Matrix{{1}, {2}});
  CHECK(g.node_count() == 2);
  CHECK(g.edge_count() == 2);
  CHECK(g.degree(0) == 2);
  CHECK(g.distinct_neighbors(0).size() == 1);
  CHECK(g.edge_features()(1, 0) == 2.0);
}

TEST_CASE("graph: self-loop counts twice") {
  const std::vector<FlowRecord> r{rec("A", "A", {1})};
  const auto g = build_graph(r, numcore::Matrix{{1}});
  CHECK(g.node_count() == 1);
  CHECK(g.edge_count() == 1);
  CHECK(g.degree(0) == 2);
  CHECK(g.distinct_neighbors(0).empty());
}

TEST_CASE("graph: degree sum is twice the edge count and incidences are exact") {
  const auto recs = synth_dataset({.classes = 3, .nodes = 30, .edges = 400, .seed = 5});
  const auto schema = FeatureSchema::synthetic(8);
  const auto x = fit_standardizer(recs, schema).apply(recs);
  for (auto key : {NodeKey::Ip, NodeKey::IpPort}) {
    const auto g = build_graph(recs, x, key, 3);
    CHECK(g.edge_count() == recs.size());
    std::size_t total = 0;
    std::vector<std::size_t> seen(g.edge_count(), 0);
    for (std::size_t v = 0; v < g.node_count(); ++v) {
      total += g.degree(v);
      for (const auto& inc : g.incident(v)) {
        ++seen[inc.edge];
        const auto& e = g.edge(inc.edge);
        CHECK((e.src == v || e.dst == v));
        CHECK(inc.neighbor == (e.src == v ? e.dst : e.src));
      }
    }
    CHECK(total == 2 * g.edge_count());
    for (std::size_t c : seen) CHECK(c == 2);
    const auto h = g.node_features();
    CHECK(h.cols() == 3);
    for (double v : h.values()) CHECK(v == 1.0);
  }
  CHECK(build_graph(recs, x, NodeKey::IpPort).node_count() >
        build_graph(recs, x, NodeKey::Ip).node_count());
}

TEST_CASE("graph dump round-trips") {
  const auto recs = synth_dataset({.classes = 2, .nodes = 12, .edges = 30, .seed = 8});
  const auto s = fit_standardizer(recs, FeatureSchema::synthetic(8));
  const auto g = build_graph(recs, s.apply(recs));
  REQUIRE(g.edge_attacks.size() == recs.size());
  const auto dir = std::filesystem::temp_directory_path() / "flowcontrast_graph_test";
  std::filesystem::create_directories(dir);
  write_graph(g, (dir / "g.csv").string(), (dir / "g.json").string(), s.column_names, "abc");
  const auto back = read_graph((dir / "g.csv").string(), (dir / "g.json").string());
  CHECK(back.node_names() == g.node_names());
  CHECK(back.edge_features() == g.edge_features());
  CHECK(back.edge_attacks == g.edge_attacks);
  CHECK(back.edge_labels == g.edge_labels);
  for (std::size_t e = 0; e < g.edge_count(); ++e) {
    CHECK(back.edge(e).src == g.edge(e).src);
    CHECK(back.edge(e).dst == g.edge(e).dst);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("node_key parsing") {
  CHECK(parse_node_key("ip") == NodeKey::Ip);
  CHECK(parse_node_key("ip:port") == NodeKey::IpPort);
  CHECK_THROWS_AS(parse_node_key("mac"), ConfigError);
}

// --- synthetic data ---------------------------------------------------------

namespace {

// Fits class means on the first half, scores nearest-mean on the second.
double nearest_mean_accuracy(const std::vector<FlowRecord>& recs, std::size_t classes) {
  const std::size_t half = recs.size() / 2, d = recs[0].numeric.size();
  std::vector<std::vector<double>> mean(classes, std::vector<double>(d, 0.0));
  std::vector<double> count(classes, 0.0);
  auto cls = [](const FlowRecord& r) {
    return r.attack == "Benign" ? 0 : std::stoul(r.attack.substr(6));
  };
  for (std::size_t i = 0; i < half; ++i) {
    const auto c = cls(recs[i]);
    count[c] += 1;
    for (std::size_t f = 0; f < d; ++f) mean[c][f] += recs[i].numeric[f];
  }
  for (std::size_t c = 0; c < classes; ++c) {
    for (double& m : mean[c]) m /= count[c];
  }
  std::size_t hit = 0;
  for (std::size_t i = half; i < recs.size(); ++i) {
    std::size_t best = 0;
    double best_d = INFINITY;
    for (std::size_t c = 0; c < classes; ++c) {
      double s = 0;
      for (std::size_t f = 0; f < d; ++f) s += std::pow(recs[i].numeric[f] - mean[c][f], 2);
      if (s < best_d) best_d = s, best = c;
    }
    hit += best == cls(recs[i]);
  }
  return double(hit) / double(recs.size() - half);
}

}  // namespace

TEST_CASE("synth: zero separation leaves classes indistinguishable") {
  const auto recs = synth_dataset({.classes = 3, .nodes = 60, .edges = 6000, .separation = 0.0});
  CHECK(std::abs(nearest_mean_accuracy(recs, 3) - 1.0 / 3.0) < 0.04);
}

TEST_CASE("synth: six sigma separation is nearly perfectly separable") {
  const auto recs = synth_dataset({.classes = 3, .nodes = 60, .edges = 3000, .separation = 6.0});
  CHECK(nearest_mean_accuracy(recs, 3) > 0.99);
}

TEST_CASE("synth: balanced classes, label rule, community bias") {
  const SynthConfig cfg{.classes = 4, .nodes = 40, .edges = 800, .seed = 21};
  const auto recs = synth_dataset(cfg);
  std::map<std::string, int> counts;
  int in_community = 0;
  for (const auto& r : recs) {
    ++counts[r.attack];
    CHECK((r.label == 0) == (r.attack == "Benign"));
    CHECK(r.src_ip != r.dst_ip);
    const auto node = [](const std::string& ip) {
      const auto p = ip.rfind('.');
      const auto q = ip.rfind('.', p - 1);
      return std::stoul(ip.substr(q + 1, p - q - 1)) * 256 + std::stoul(ip.substr(p + 1));
    };
    in_community += node(r.src_ip) * 4 / 40 == node(r.dst_ip) * 4 / 40;
  }
  CHECK(counts.size() == 4);
  for (const auto& [k, v] : counts) CHECK(v == 200);
  CHECK(in_community > 0.9 * 800);
}

TEST_CASE("synth: same seed gives a byte-identical CSV") {
  const SynthConfig cfg{.seed = 99};
  const auto schema = FeatureSchema::synthetic(cfg.feature_dim);
  std::ostringstream a, b, c;
  write_netflow_csv(a, synth_dataset(cfg), schema);
  write_netflow_csv(b, synth_dataset(cfg), schema);
  write_netflow_csv(c, synth_dataset({.seed = 100}), schema);
  CHECK(a.str() == b.str());
  CHECK(a.str() != c.str());
}

TEST_CASE("synth: argument checks") {
  CHECK_THROWS_AS(synth_dataset({.classes = 3, .edges = 2}), InvalidArgument);
  CHECK_THROWS_AS(synth_dataset({.classes = 1}), InvalidArgument);
}

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "flowcontrast/downeval.hpp"
#include "flowcontrast/flowdata.hpp"
#include "flowcontrast/negat.hpp"
#include "flowcontrast/negsc.hpp"
#include "flowcontrast/textio.hpp"

// Run configuration and the file-level commands behind the command-line tool.
namespace flowcontrast::pipeline {

inline constexpr const char* kOutDirEnv = "FLOWCONTRAST_OUT_DIR";

struct RunConfig {
  std::string schema = "synthetic";  // path, "synthetic" or "netflow_v1"
  std::vector<std::string> data;     // input CSVs
  double fraction = 1.0;
  double train_ratio = 0.7;
  std::string node_key = "ip";

  negat::EncoderConfig encoder;
  std::string activation = "relu";
  std::string optimizer = "adam";
  negsc::ContrastConfig contrast;
  flowdata::SynthConfig synth;

  std::string eval_mode = "clustering";  // clustering | probe | both
  std::string eval_task = "multiclass";  // multiclass | binary
  std::size_t probe_epochs = 200;
  double probe_lr = 0.05;
  std::size_t kmeans_restarts = 4;
  std::size_t kmeans_max_iter = 100;

  std::uint64_t gradcheck_seed = 4;
  std::size_t gradcheck_dim = 8;
  double gradcheck_perturbation = 1e-5;
  double gradcheck_tolerance = 1e-4;

  std::string out_dir = "out";
  std::uint64_t seed = 1;

  /// Every key in canonical order.
  static std::vector<std::string> keys();
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  /// "key=value"
  void apply_override(const std::string& assignment);

  static RunConfig from_key_values(const textio::KeyValues& kv);
  static RunConfig load(const std::string& path);
  std::string to_text() const;
  /// FNV-1a of the canonical text without out_dir.
  std::string hash() const;
  void validate() const;

  std::string path(const std::string& name) const;
  std::uint64_t encoder_seed() const { return seed + 1; }
  std::uint64_t generator_seed() const { return seed + 2; }
  std::uint64_t train_seed() const { return seed + 3; }
  std::uint64_t eval_seed() const { return seed + 4; }
  flowdata::FeatureSchema resolve_schema() const;
};

/// Precedence: defaults < config file < environment < overrides.
RunConfig resolve_config(const std::optional<std::string>& config_path,
                         const std::vector<std::string>& overrides,
                         const std::optional<std::string>& out_dir = std::nullopt);

// ---------------------------------------------------------------------------

struct CommandResult {
  std::vector<std::string> written;
  std::vector<std::string> warnings;
};

/// synth.csv and synth.schema.
CommandResult cmd_synth(const RunConfig& cfg);
/// Train/test graph dumps, standardizer and split manifest.
CommandResult cmd_preprocess(const RunConfig& cfg);
/// checkpoint.json and loss_trace.csv; wall-clock times go to train_log.json.
CommandResult cmd_train(const RunConfig& cfg);
/// <graph>_embeddings.csv for the train and test graphs.
CommandResult cmd_embed(const RunConfig& cfg, const std::optional<std::string>& checkpoint);
/// metrics_<mode>.json, confusion_<mode>.csv, roc_<mode>.csv.
CommandResult cmd_eval(const RunConfig& cfg);

struct GradcheckOutcome {
  numcore::GradReport report;
  std::size_t parameter_count = 0;
  double loss = 0.0;
  double seconds = 0.0;
  bool passed = false;
  CommandResult files;
};

GradcheckOutcome cmd_gradcheck(const RunConfig& cfg, bool corrupt_gradient);

// ---------------------------------------------------------------------------
// Pieces shared by the commands and the tests.

struct Checkpoint {
  negat::EncoderParams encoder;
  negsc::GeneratorParams generator;
  std::string config_hash;

  nlohmann::json to_json() const;
  static Checkpoint from_json(const nlohmann::json& j);
};

void write_checkpoint(const std::string& path, const Checkpoint& c);
Checkpoint read_checkpoint(const std::string& path);

struct EmbeddingTable {
  std::vector<int> labels;
  std::vector<std::string> attacks;
  numcore::Matrix embeddings;
};

std::string embedding_csv(const flowdata::FlowGraph& g, const numcore::Matrix& edge_embeddings);
EmbeddingTable read_embedding_csv(const std::string& path);

/// Seeded tiny instance for the loss gradient check: a 6-node synthetic flow
/// graph, n_s = 2, N = 2, M = 1, with projection and output width `dim`.
struct GradcheckInstance {
  flowdata::FlowGraph graph;
  negat::EncoderParams encoder;
  negsc::GeneratorParams generator;
  negsc::ContrastConfig contrast;
  negsc::ContrastBatch batch;
};

GradcheckInstance make_gradcheck_instance(std::uint64_t seed, std::size_t dim);

struct LossGradCheck {
  numcore::GradReport report;
  std::vector<double> analytic;
  double loss = 0.0;
};

/// Plan-fixed analytic gradient of the full objective against finite
/// differences over every encoder and generator parameter.
LossGradCheck check_loss_gradient(const GradcheckInstance& inst, double perturbation,
                                  bool corrupt_gradient = false);

}  // namespace flowcontrast::pipeline

// flowcontrast: command-line front end for the pipeline.
//
//   flowcontrast <command> [--config FILE] [--set key=value ...] [--out DIR]
//
// Exit codes: 0 success, 2 config/schema/io error, 3 numeric failure.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "flowcontrast/errors.hpp"
#include "flowcontrast/pipeline.hpp"

namespace {

using namespace flowcontrast;

struct CommonOptions {
  std::string config;
  std::vector<std::string> overrides;
  std::string out;

  pipeline::RunConfig resolve() const {
    return pipeline::resolve_config(config.empty() ? std::nullopt : std::optional(config),
                                    overrides, out.empty() ? std::nullopt : std::optional(out));
  }
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("-c,--config", o.config, "key = value config file");
  cmd->add_option("-s,--set", o.overrides, "override a config key (key=value), repeatable");
  cmd->add_option("-o,--out", o.out,
                  std::string("output directory (overrides config and $") + pipeline::kOutDirEnv + ")");
}

void report(const pipeline::CommandResult& r) {
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
  for (const auto& f : r.written) std::cout << "wrote " << f << '\n';
}

int run(int argc, char** argv) {
  CLI::App app{"Self-supervised edge embeddings for flow graphs"};
  app.require_subcommand(1);

  CommonOptions synth_o, pre_o, train_o, embed_o, eval_o, grad_o, def_o;
  auto* synth = app.add_subcommand("synth", "write a planted-class synthetic flow CSV");
  add_common(synth, synth_o);
  auto* pre = app.add_subcommand("preprocess", "parse, downsample, split, standardize and build graphs");
  add_common(pre, pre_o);
  auto* train = app.add_subcommand("train", "train encoder and generator on the train graph");
  add_common(train, train_o);
  auto* embed = app.add_subcommand("embed", "write edge embeddings for the train and test graphs");
  add_common(embed, embed_o);
  std::string checkpoint;
  embed->add_option("--checkpoint", checkpoint, "checkpoint path (default <out>/checkpoint.json)");
  auto* eval = app.add_subcommand("eval", "downstream clustering / linear probe metrics");
  add_common(eval, eval_o);
  auto* grad = app.add_subcommand("gradcheck", "finite-difference check of the training gradient");
  add_common(grad, grad_o);
  bool corrupt = false;
  grad->add_flag("--corrupt-gradient", corrupt, "debug: double the analytic gradient before comparing");
  auto* defaults = app.add_subcommand("defaults", "print the resolved configuration");
  add_common(defaults, def_o);

  CLI11_PARSE(app, argc, argv);

  if (*synth) {
    report(pipeline::cmd_synth(synth_o.resolve()));
  } else if (*pre) {
    report(pipeline::cmd_preprocess(pre_o.resolve()));
  } else if (*train) {
    report(pipeline::cmd_train(train_o.resolve()));
  } else if (*embed) {
    report(pipeline::cmd_embed(embed_o.resolve(),
                               checkpoint.empty() ? std::nullopt : std::optional(checkpoint)));
  } else if (*eval) {
    report(pipeline::cmd_eval(eval_o.resolve()));
  } else if (*grad) {
    const auto o = pipeline::cmd_gradcheck(grad_o.resolve(), corrupt);
    for (const auto& b : o.report.blocks) {
      std::printf("%-36s %.3e\n", b.name.c_str(), b.max_rel_error);
    }
    std::printf("global max relative error %.3e over %zu parameters (%.2fs): %s\n",
                o.report.global_max_rel_error, o.parameter_count, o.seconds,
                o.passed ? "PASS" : "FAIL");
    report(o.files);
    return o.passed ? 0 : 3;
  } else if (*defaults) {
    const auto cfg = def_o.resolve();
    cfg.validate();
    std::cout << cfg.to_text();
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const SchemaError& e) {
    std::cerr << "schema error: " << e.what() << '\n';
    return 2;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return 2;
  } catch (const InvalidArgument& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return 3;
  } catch (const CheckFailed& e) {
    std::cerr << "check failed: " << e.what() << '\n';
    return 3;
  } catch (const DegenerateError& e) {
    std::cerr << "degenerate input: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

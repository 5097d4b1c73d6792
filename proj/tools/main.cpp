#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "ftp/core/errors.hpp"

#include "commands.hpp"
#include "run_config.hpp"

namespace {

using ftp::cli::RunConfig;

struct Common {
  std::string config_file;
  std::vector<std::string> overrides;
  std::optional<std::string> out_dir;
  std::optional<long long> seed;
  std::optional<long long> threads;
};

// Flag name -> config key, applied after the file and key=value overrides.
using FlagMap = std::map<std::string, std::optional<std::string>>;

CLI::App* add_command(CLI::App& parent, const std::string& name, const std::string& help, Common& common) {
  auto* cmd = parent.add_subcommand(name, help);
  cmd->add_option("--config", common.config_file, "key=value config file");
  cmd->add_option("--out", common.out_dir, "output directory (run.out_dir)");
  cmd->add_option("--seed", common.seed, "run.seed");
  cmd->add_option("--threads", common.threads, "cap on worker threads (run.threads)");
  cmd->add_option("overrides", common.overrides, "key=value settings that override the config file");
  return cmd;
}

RunConfig resolve(const Common& common, const FlagMap& flags) {
  RunConfig cfg;
  if (!common.config_file.empty()) cfg.load_file(common.config_file);
  for (const auto& o : common.overrides) cfg.set_assignment(o);
  if (common.out_dir) cfg.set("run.out_dir", *common.out_dir);
  if (common.seed) cfg.set("run.seed", std::to_string(*common.seed));
  if (common.threads) cfg.set("run.threads", std::to_string(*common.threads));
  for (const auto& [key, value] : flags) {
    if (value) cfg.set(key, *value);
  }
  if (cfg.integer("run.threads") < 1) throw ftp::ConfigError("run.threads must be at least 1");
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Future token prediction models: training, sampling, gridworld and probes"};
  app.require_subcommand(1);
  Common common;
  FlagMap flags;

  auto* train_lm = add_command(app, "train-lm", "train a GPT or FTP model on a text or token corpus", common);
  auto* train_grid = add_command(app, "train-grid", "train a model on a gridworld dataset", common);

  auto* generate = add_command(app, "generate", "sample a continuation from a checkpoint", common);
  generate->add_option("--checkpoint", flags["sample.checkpoint"], "sample.checkpoint");
  generate->add_option("--prompt", flags["sample.prompt"], "sample.prompt");
  generate->add_option("--strategy", flags["sample.strategy"], "gpt, ftp_single or ftp_lookahead");
  generate->add_option("--top-k", flags["sample.top_k"], "sample.top_k");
  generate->add_option("--temperature", flags["sample.temperature"], "sample.temperature");
  generate->add_option("-K", flags["sample.lookahead_k"], "lookahead candidates");
  generate->add_option("-L", flags["sample.lookahead_l"], "lookahead distance");
  generate->add_option("-n", flags["sample.n"], "tokens to generate");

  auto* grid = app.add_subcommand("gridworld", "gridworld datasets and evaluation");
  grid->require_subcommand(1);
  auto* grid_gen = add_command(*grid, "gen", "generate train/test datasets", common);
  auto* grid_eval = add_command(*grid, "eval", "evaluate a checkpoint (or the oracle stub) on a test set", common);
  auto* grid_inspect = add_command(*grid, "inspect", "render one instance as ASCII", common);

  auto* probe = app.add_subcommand("probe", "probes on frozen embeddings");
  probe->require_subcommand(1);
  auto* probe_sim = add_command(*probe, "similarity", "cosine similarity against separation", common);
  auto* probe_future = add_command(*probe, "future", "per-offset future-token perplexities", common);
  auto* probe_classify = add_command(*probe, "classify", "mean-pooled text classification", common);

  auto* params = add_command(app, "param-count", "parameter breakdown of a model configuration", common);
  auto* keys = app.add_subcommand("keys", "list every configuration key with its default");

  CLI11_PARSE(app, argc, argv);

  if (keys->parsed()) {
    for (const auto& k : ftp::cli::known_keys()) {
      std::cout << k.name << " = " << k.fallback << "\n    " << k.help << '\n';
    }
    return 0;
  }

  try {
    const auto cfg = resolve(common, flags);
    auto& log = std::cerr;
    if (train_lm->parsed()) ftp::cli::cmd_train_lm(cfg, log);
    else if (train_grid->parsed()) ftp::cli::cmd_train_grid(cfg, log);
    else if (generate->parsed()) std::cout << ftp::cli::cmd_generate(cfg, log) << '\n';
    else if (grid_gen->parsed()) ftp::cli::cmd_gridworld_gen(cfg, log);
    else if (grid_eval->parsed()) ftp::cli::cmd_gridworld_eval(cfg, log);
    else if (grid_inspect->parsed()) ftp::cli::cmd_gridworld_inspect(cfg, std::cout);
    else if (probe_sim->parsed()) ftp::cli::cmd_probe_similarity(cfg, log);
    else if (probe_future->parsed()) ftp::cli::cmd_probe_future(cfg, log);
    else if (probe_classify->parsed()) ftp::cli::cmd_probe_classify(cfg, log);
    else if (params->parsed()) ftp::cli::cmd_param_count(cfg, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

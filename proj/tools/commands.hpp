#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "ftp/data/corpus.hpp"
#include "ftp/data/tokenizer.hpp"
#include "ftp/model/models.hpp"
#include "ftp/probes/probes.hpp"
#include "run_config.hpp"

namespace ftp::cli {

using AnyModel = std::variant<model::GptModel<float>, model::GptModel<double>, model::FtpModel<float>,
                              model::FtpModel<double>>;

// Fresh model of the given kind ("gpt" / "ftp") and dtype ("f32" / "f64").
AnyModel make_model(const std::string& kind, const std::string& dtype, const model::ModelConfig& config,
                    std::uint64_t seed);

struct LoadedModel {
  AnyModel model;
  std::map<std::string, std::string> config;  // as stored in the checkpoint
};

LoadedModel load_model(const std::filesystem::path& checkpoint);

bool is_ftp(const AnyModel& m);
const model::ModelConfig& model_config(const AnyModel& m);

// "byte" or the path of a saved tokenizer.
data::Tokenizer make_tokenizer(const std::string& spec);

// A path with a .meta sidecar is read as a token corpus; anything else is
// read as text and encoded with `tokenizer`.
data::TokenCorpus load_corpus(const std::filesystem::path& path, const data::Tokenizer& tokenizer);

struct FutureProbeOptions {
  std::size_t offsets = 5;
  std::size_t n_windows = 64;
  std::size_t heldout_windows = 16;
  std::size_t window_len = 0;  // 0: enc_ctx
  bool gpt_decoder_probe = true;
  probes::ProbeConfig budget;  // offset is set per row
};

struct FutureProbeRow {
  std::size_t offset = 0;
  double probe_ce = 0.0, probe_ppl = 0.0;  // MLP probe on frozen embeddings
  std::optional<double> decoder_ce, decoder_ppl;  // FTP decoder, or a decoder probe for GPT
  std::optional<double> native_ce, native_ppl;    // GPT LM head, offset 1 only
};

// Per-offset held-out perplexities 1..offsets on windows from the last tenth
// of the corpus. Both model kinds get the MLP probe; FTP models read their
// own decoder, GPT models a decoder probe shaped like the configured FTP
// decoder (when requested) and their LM head at offset 1.
std::vector<FutureProbeRow> future_probe_rows(const AnyModel& m, const data::TokenCorpus& corpus,
                                              const FutureProbeOptions& options, std::uint64_t seed);

void write_future_csv(const std::filesystem::path& path, const std::vector<FutureProbeRow>& rows);

// Each command writes config.json plus its outputs into cfg.out_dir() and
// throws on failure. Progress goes to `log`.
void cmd_train_lm(const RunConfig& cfg, std::ostream& log);
void cmd_train_grid(const RunConfig& cfg, std::ostream& log);
// Returns the decoded text (prompt included).
std::string cmd_generate(const RunConfig& cfg, std::ostream& log);
void cmd_gridworld_gen(const RunConfig& cfg, std::ostream& log);
void cmd_gridworld_eval(const RunConfig& cfg, std::ostream& log);
void cmd_gridworld_inspect(const RunConfig& cfg, std::ostream& log);
void cmd_probe_similarity(const RunConfig& cfg, std::ostream& log);
void cmd_probe_future(const RunConfig& cfg, std::ostream& log);
void cmd_probe_classify(const RunConfig& cfg, std::ostream& log);
void cmd_param_count(const RunConfig& cfg, std::ostream& log);

}  // namespace ftp::cli

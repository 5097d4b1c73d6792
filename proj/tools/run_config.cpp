#include "run_config.hpp"

#include <cstdlib>
#include <fstream>

#include "json.hpp"

#include "ftp/core/errors.hpp"

namespace ftp::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parses_integer(const std::string& v) {
  if (v.empty()) return false;
  char* end = nullptr;
  std::strtoll(v.c_str(), &end, 10);
  return *end == '\0';
}

bool parses_real(const std::string& v) {
  if (v.empty()) return false;
  char* end = nullptr;
  std::strtod(v.c_str(), &end);
  return *end == '\0';
}

}  // namespace

const std::vector<KeySpec>& known_keys() {
  using K = KeyType;
  static const std::vector<KeySpec> keys = {
      {"run.seed", K::integer, "1", "seed for model init, data order and sampling"},
      {"run.out_dir", K::text, "", "output directory (default $FTP_OUT_DIR, else ./runs)"},
      {"run.threads", K::integer, "1", "worker cap; kernels are single-threaded"},

      {"model.kind", K::text, "ftp", "ftp or gpt"},
      {"model.dtype", K::text, "f32", "f32 or f64"},
      {"model.preset", K::text, "", "'reference' selects the 12x768 layout; explicit keys still override"},
      {"model.vocab_size", K::integer, "0", "0: taken from the corpus or task"},
      {"model.dim", K::integer, "64", "embedding width"},
      {"model.enc_layers", K::integer, "2", "encoder blocks"},
      {"model.dec_layers", K::integer, "1", "FTP decoder blocks"},
      {"model.heads", K::integer, "4", "attention heads"},
      {"model.mlp_dim", K::integer, "192", "SwiGLU hidden width"},
      {"model.enc_ctx", K::integer, "64", "encoder context length"},
      {"model.n_future", K::integer, "8", "future tokens predicted per position (N)"},
      {"model.pseudo_seq", K::integer, "8", "pseudo-sequence length (Seq)"},
      {"model.gamma", K::real, "0.8", "loss down-weighting per future offset"},
      {"model.dropout", K::real, "0", "dropout rate"},

      {"train.lr_max", K::real, "4e-4", "peak learning rate"},
      {"train.lr_min", K::real, "0", "final learning rate"},
      {"train.warmup_steps", K::integer, "100", "linear warmup steps"},
      {"train.total_steps", K::integer, "1000", "optimizer steps (grid: overridden by train.epochs)"},
      {"train.epochs", K::integer, "0", "grid only: passes over the training set (0: use total_steps)"},
      {"train.weight_decay", K::real, "0.1", "decoupled weight decay"},
      {"train.beta1", K::real, "0.9", "Adam beta1"},
      {"train.beta2", K::real, "0.95", "Adam beta2"},
      {"train.eps", K::real, "1e-8", "Adam epsilon"},
      {"train.accumulation", K::integer, "1", "micro-batches per step"},
      {"train.grad_clip", K::real, "1", "global gradient norm limit (0: off)"},
      {"train.batch_size", K::integer, "8", "sequences per micro-batch"},
      {"train.len", K::integer, "0", "LM window length (0: enc_ctx)"},
      {"train.eval_interval", K::integer, "100", "steps between validation rows (0: off)"},
      {"train.eval_batches", K::integer, "4", "LM validation batches"},
      {"train.checkpoint_interval", K::integer, "0", "steps between checkpoints (0: final only)"},
      {"train.resume", K::text, "", "checkpoint to resume from"},

      {"data.corpus", K::text, "", "text file, or token corpus with a .meta sidecar"},
      {"data.val_corpus", K::text, "", "validation corpus (default: tail of data.corpus)"},
      {"data.val_fraction", K::real, "0.1", "share of a text corpus held out for validation"},
      {"data.tokenizer", K::text, "byte", "'byte' or a saved tokenizer file, used for text inputs"},

      {"sample.checkpoint", K::text, "", "model checkpoint"},
      {"sample.prompt", K::text, "", "prompt text"},
      {"sample.n", K::integer, "100", "tokens to generate"},
      {"sample.strategy", K::text, "", "gpt, ftp_single or ftp_lookahead (default by model kind)"},
      {"sample.top_k", K::integer, "100", "top-K cut-off"},
      {"sample.temperature", K::real, "1", "softmax temperature"},
      {"sample.lookahead_k", K::integer, "4", "lookahead candidates K"},
      {"sample.lookahead_l", K::integer, "0", "lookahead distance L (<= n_future - 1)"},
      {"sample.gamma", K::real, "0.8", "lookahead discount"},
      {"sample.suppress", K::integer, "-1", "token id never sampled (-1: none)"},

      {"grid.train", K::text, "", "training dataset file"},
      {"grid.test", K::text, "", "test dataset file"},
      {"grid.n_train", K::integer, "50000", "instances generated for training"},
      {"grid.n_test", K::integer, "1000", "instances generated for testing"},
      {"grid.len_train", K::text, "6-10", "training program lengths"},
      {"grid.len_test", K::text, "1-10", "test program lengths"},
      {"grid.p_obstruction", K::real, "0.15", "interior obstruction probability"},
      {"grid.p_zero", K::real, "0.7", "probability of a zero score"},
      {"grid.loss_region", K::text, "all", "all or program"},
      {"grid.eval_batch", K::integer, "16", "prompts decoded together"},
      {"grid.eval_limit", K::integer, "0", "evaluate the first n test instances (0: all)"},
      {"grid.eval_instances", K::integer, "64", "test instances used for validation loss"},
      {"grid.checkpoint", K::text, "", "model checkpoint for eval"},
      {"grid.generator", K::text, "model", "model or oracle (ground-truth stub)"},
      {"grid.index", K::integer, "0", "instance shown by inspect"},

      {"probe.checkpoint", K::text, "", "frozen model checkpoint"},
      {"probe.corpus", K::text, "", "text or token corpus"},
      {"probe.max_sep", K::integer, "250", "largest separation"},
      {"probe.n_sequences", K::integer, "16", "windows sampled for similarity"},
      {"probe.seq_len", K::integer, "0", "window length (0: enc_ctx)"},
      {"probe.far_pairs", K::integer, "20000", "cross-window pairs for the far field"},
      {"probe.offsets", K::integer, "5", "future offsets probed (1..k)"},
      {"probe.expansion", K::integer, "4", "MLP probe expansion"},
      {"probe.epochs", K::integer, "4", "probe training epochs"},
      {"probe.lr", K::real, "1e-3", "probe learning rate"},
      {"probe.batch_size", K::integer, "64", "probe batch rows"},
      {"probe.n_windows", K::integer, "64", "training windows for future probes"},
      {"probe.heldout_windows", K::integer, "16", "held-out windows for future probes"},
      {"probe.decoder", K::integer, "1", "GPT only: also train a decoder probe (0/1)"},
      {"probe.labels", K::text, "", "label<TAB>text file"},
      {"probe.heldout_fraction", K::real, "0.2", "classification held-out share"},
      {"probe.hidden", K::integer, "0", "classifier width (0: 4 * dim)"},
  };
  return keys;
}

RunConfig::RunConfig() {
  for (const auto& k : known_keys()) values_[k.name] = k.fallback;
}

const KeySpec& RunConfig::spec(const std::string& key) const {
  for (const auto& k : known_keys()) {
    if (k.name == key) return k;
  }
  throw ConfigError("unknown configuration key '" + key + "'");
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto& s = spec(key);
  if (s.type == KeyType::integer && !parses_integer(value)) {
    throw ConfigError("key '" + key + "' expects an integer, got '" + value + "'");
  }
  if (s.type == KeyType::real && !parses_real(value)) {
    throw ConfigError("key '" + key + "' expects a number, got '" + value + "'");
  }
  values_[key] = value;
  explicit_[key] = true;
}

void RunConfig::set_assignment(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + text + "'");
  set(trim(text.substr(0, eq)), trim(text.substr(eq + 1)));
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    try {
      set_assignment(line);
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

const std::string& RunConfig::text(const std::string& key) const {
  spec(key);
  return values_.at(key);
}

std::int64_t RunConfig::integer(const std::string& key) const {
  if (spec(key).type != KeyType::integer) throw ConfigError("key '" + key + "' is not an integer");
  return std::strtoll(values_.at(key).c_str(), nullptr, 10);
}

std::size_t RunConfig::count(const std::string& key) const {
  const auto v = integer(key);
  if (v < 0) throw ConfigError("key '" + key + "' must be non-negative");
  return std::size_t(v);
}

double RunConfig::real(const std::string& key) const {
  if (spec(key).type != KeyType::real) throw ConfigError("key '" + key + "' is not a number");
  return std::strtod(values_.at(key).c_str(), nullptr);
}

std::filesystem::path RunConfig::out_dir() const {
  if (!values_.at("run.out_dir").empty()) return values_.at("run.out_dir");
  if (const char* env = std::getenv("FTP_OUT_DIR"); env && *env) return env;
  return "runs";
}

std::string RunConfig::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& k : known_keys()) {
    const auto& v = values_.at(k.name);
    switch (k.type) {
      case KeyType::integer:
        j[k.name] = std::strtoll(v.c_str(), nullptr, 10);
        break;
      case KeyType::real:
        j[k.name] = std::strtod(v.c_str(), nullptr);
        break;
      case KeyType::text:
        j[k.name] = v;
        break;
    }
  }
  return j.dump(2);
}

void RunConfig::write_resolved(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "config.json");
  out << to_json() << '\n';
  if (!out) throw std::runtime_error("cannot write " + (dir / "config.json").string());
}

model::ModelConfig RunConfig::model_config() const {
  model::ModelConfig c;
  if (text("model.preset") == "reference") {
    c = model::reference_config();
  } else if (!text("model.preset").empty()) {
    throw ConfigError("unknown model.preset '" + text("model.preset") + "'");
  }
  const bool reference = text("model.preset") == "reference";
  auto take = [&](const char* key, std::size_t& field) {
    if (!reference || was_set(key)) field = count(key);
  };
  take("model.vocab_size", c.vocab_size);
  take("model.dim", c.dim);
  take("model.enc_layers", c.enc_layers);
  take("model.dec_layers", c.dec_layers);
  take("model.heads", c.heads);
  take("model.mlp_dim", c.mlp_dim);
  take("model.enc_ctx", c.enc_ctx);
  take("model.n_future", c.n_future);
  take("model.pseudo_seq", c.pseudo_seq);
  if (!reference || was_set("model.gamma")) c.gamma = real("model.gamma");
  if (!reference || was_set("model.dropout")) c.dropout = real("model.dropout");
  return c;
}

training::TrainConfig RunConfig::train_config() const {
  training::TrainConfig t;
  t.lr_max = real("train.lr_max");
  t.lr_min = real("train.lr_min");
  t.warmup_steps = count("train.warmup_steps");
  t.total_steps = count("train.total_steps");
  t.weight_decay = real("train.weight_decay");
  t.beta1 = real("train.beta1");
  t.beta2 = real("train.beta2");
  t.eps = real("train.eps");
  t.accumulation = count("train.accumulation");
  t.grad_clip = real("train.grad_clip");
  t.seed = std::uint64_t(integer("run.seed"));
  t.batch_size = count("train.batch_size");
  t.eval_interval = count("train.eval_interval");
  t.checkpoint_interval = count("train.checkpoint_interval");
  return t;
}

}  // namespace ftp::cli

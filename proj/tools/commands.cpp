#include "commands.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <ostream>
#include <random>
#include <sstream>

#include "json.hpp"

#include "ftp/core/errors.hpp"
#include "ftp/gridworld/codec.hpp"
#include "ftp/gridworld/dataset.hpp"
#include "ftp/gridworld/evaluate.hpp"
#include "ftp/gridworld/grid_tasks.hpp"
#include "ftp/inference/generation.hpp"
#include "ftp/training/checkpoint.hpp"
#include "ftp/training/lm_tasks.hpp"
#include "ftp/training/trainer.hpp"

namespace ftp::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using numerics::TokenId;

namespace {

template <typename M>
struct ModelTraits;
template <typename T>
struct ModelTraits<model::GptModel<T>> {
  using value_type = T;
  static constexpr bool ftp = false;
};
template <typename T>
struct ModelTraits<model::FtpModel<T>> {
  using value_type = T;
  static constexpr bool ftp = true;
};

constexpr const char* kCheckpointName = "checkpoint.ftpc";
constexpr const char* kGridTokenizer = "gridworld";

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  out << j.dump(2, ' ', false, json::error_handler_t::replace) << '\n';
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

const std::string& require(const RunConfig& cfg, const std::string& key) {
  const auto& v = cfg.text(key);
  if (v.empty()) throw ConfigError(key + " is required");
  return v;
}

fs::path prepare_out(const RunConfig& cfg) {
  const auto out = cfg.out_dir();
  cfg.write_resolved(out);
  return out;
}

gridworld::LengthRange parse_range(const std::string& key, const std::string& text) {
  gridworld::LengthRange r;
  char dash = 0;
  std::istringstream in(text);
  if (!(in >> r.min >> dash >> r.max) || dash != '-' || !in.eof()) {
    throw ConfigError(key + " expects a range such as 6-10, got '" + text + "'");
  }
  return r;
}

std::string checkpoint_tokenizer(const LoadedModel& loaded) {
  const auto it = loaded.config.find("data.tokenizer");
  return it == loaded.config.end() ? "byte" : it->second;
}

data::Tokenizer text_tokenizer(const LoadedModel& loaded) {
  const auto spec = checkpoint_tokenizer(loaded);
  if (spec == kGridTokenizer) throw ConfigError("checkpoint belongs to a gridworld model, not a text model");
  return make_tokenizer(spec);
}

// Splits corpus ids at `fraction` of the way through, keeping the metadata.
std::pair<data::TokenCorpus, data::TokenCorpus> split_corpus(const data::TokenCorpus& c, double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("split fraction must lie in (0, 1)");
  const auto cut = std::size_t(double(c.size()) * fraction);
  data::TokenCorpus a{{c.ids.begin(), c.ids.begin() + std::ptrdiff_t(cut)}, c.meta};
  data::TokenCorpus b{{c.ids.begin() + std::ptrdiff_t(cut), c.ids.end()}, c.meta};
  return {std::move(a), std::move(b)};
}

template <typename T>
void run_training(training::TrainingTask<T> task, const training::TrainConfig& tc, const RunConfig& cfg,
                  const fs::path& out, std::ostream& log) {
  training::Trainer<T> trainer(std::move(task), tc);
  std::optional<training::Checkpoint> resume;
  if (!cfg.text("train.resume").empty()) {
    resume = training::load_checkpoint(cfg.text("train.resume"));
    trainer.resume(*resume);
    log << "resumed at step " << trainer.step() << '\n';
  }
  training::MetricsLog metrics(out / "metrics.csv");
  trainer.set_metrics(&metrics);
  const std::uint64_t report = std::max<std::uint64_t>(1, tc.total_steps / 20);
  trainer.set_row_callback([&](const training::MetricRow& r) {
    if (r.split == "val" || r.step % report == 0 || r.step == tc.total_steps) {
      log << "step " << r.step << ' ' << r.split << " loss " << r.loss << " loss_k0 " << r.loss_k0 << '\n';
    }
  });
  // Interval checkpoints are kept per step so any of them can seed a resume.
  const std::uint64_t interval = tc.checkpoint_interval ? tc.checkpoint_interval : tc.total_steps;
  while (trainer.step() < tc.total_steps) {
    trainer.run(std::min<std::uint64_t>(tc.total_steps, (trainer.step() / interval + 1) * interval));
    if (tc.checkpoint_interval && trainer.step() < tc.total_steps) {
      training::save_checkpoint(out / ("checkpoint_" + std::to_string(trainer.step()) + ".ftpc"), trainer.snapshot());
    }
  }
  training::save_checkpoint(out / kCheckpointName, trainer.snapshot());

  json summary = {{"steps", trainer.step()}};
  for (auto it = metrics.rows().rbegin(); it != metrics.rows().rend(); ++it) {
    const std::string key = it->split + "_loss";
    if (!summary.contains(key)) {
      summary[key] = it->loss;
      summary[it->split + "_loss_k0"] = it->loss_k0;
    }
  }
  write_json(out / "summary.json", summary);
}

void check_resume_config(const RunConfig& cfg, const model::ModelConfig& mc) {
  if (cfg.text("train.resume").empty()) return;
  const auto ckpt = training::load_checkpoint(cfg.text("train.resume"));
  if (training::config_from_map(ckpt.config) != mc) {
    throw ConfigError("resume checkpoint was written for a different model configuration");
  }
  if (ckpt.config.at("model.kind") != cfg.text("model.kind") ||
      ckpt.config.at("model.dtype") != cfg.text("model.dtype")) {
    throw ConfigError("resume checkpoint was written for a different model kind or dtype");
  }
}

}  // namespace

AnyModel make_model(const std::string& kind, const std::string& dtype, const model::ModelConfig& config,
                    std::uint64_t seed) {
  if (dtype != "f32" && dtype != "f64") throw ConfigError("model.dtype must be f32 or f64, got '" + dtype + "'");
  const bool f32 = dtype == "f32";
  if (kind == "gpt") {
    config.validate(false);
    if (f32) return AnyModel(std::in_place_type<model::GptModel<float>>, config, seed);
    return AnyModel(std::in_place_type<model::GptModel<double>>, config, seed);
  }
  if (kind == "ftp") {
    config.validate(true);
    if (f32) return AnyModel(std::in_place_type<model::FtpModel<float>>, config, seed);
    return AnyModel(std::in_place_type<model::FtpModel<double>>, config, seed);
  }
  throw ConfigError("model.kind must be gpt or ftp, got '" + kind + "'");
}

LoadedModel load_model(const fs::path& checkpoint) {
  auto ckpt = training::load_checkpoint(checkpoint);
  const auto kind = ckpt.config.find("model.kind");
  const auto dtype = ckpt.config.find("model.dtype");
  if (kind == ckpt.config.end() || dtype == ckpt.config.end()) {
    throw ConfigError("checkpoint " + checkpoint.string() + " does not record model.kind / model.dtype");
  }
  LoadedModel out{make_model(kind->second, dtype->second, training::config_from_map(ckpt.config), 0), ckpt.config};
  std::visit(
      [&](auto& m) {
        using T = typename ModelTraits<std::decay_t<decltype(m)>>::value_type;
        training::restore_checkpoint<T>(ckpt, m.named_parameters(), nullptr);
      },
      out.model);
  return out;
}

bool is_ftp(const AnyModel& m) {
  return std::visit([](const auto& x) { return ModelTraits<std::decay_t<decltype(x)>>::ftp; }, m);
}

const model::ModelConfig& model_config(const AnyModel& m) {
  return std::visit([](const auto& x) -> const model::ModelConfig& { return x.config(); }, m);
}

data::Tokenizer make_tokenizer(const std::string& spec) {
  if (spec == "byte") return data::Tokenizer::byte_level();
  return data::Tokenizer::load(spec);
}

data::TokenCorpus load_corpus(const fs::path& path, const data::Tokenizer& tokenizer) {
  if (fs::exists(data::meta_path(path))) return data::read_corpus(path);
  data::TokenCorpus c;
  c.ids = tokenizer.encode(read_text(path));
  c.meta.vocab_size = tokenizer.vocab_size();
  c.meta.tokenizer = tokenizer.identifier();
  return c;
}

// ---------------------------------------------------------------- training

void cmd_train_lm(const RunConfig& cfg, std::ostream& log) {
  const auto out = prepare_out(cfg);
  const auto tokenizer = make_tokenizer(cfg.text("data.tokenizer"));
  auto corpus = load_corpus(require(cfg, "data.corpus"), tokenizer);
  data::TokenCorpus train, val;
  if (!cfg.text("data.val_corpus").empty()) {
    train = std::move(corpus);
    val = load_corpus(cfg.text("data.val_corpus"), tokenizer);
  } else {
    std::tie(train, val) = split_corpus(corpus, 1.0 - cfg.real("data.val_fraction"));
  }

  auto mc = cfg.model_config();
  if (mc.vocab_size == 0) mc.vocab_size = train.meta.vocab_size;
  if (mc.vocab_size < train.meta.vocab_size) throw ConfigError("model.vocab_size is smaller than the corpus vocabulary");
  check_resume_config(cfg, mc);

  training::LmTaskOptions opt;
  opt.batch_size = cfg.count("train.batch_size");
  opt.len = cfg.count("train.len") ? cfg.count("train.len") : mc.enc_ctx;
  opt.eval_batches = cfg.count("train.eval_batches");
  opt.seed = std::uint64_t(cfg.integer("run.seed"));
  const auto tc = cfg.train_config();

  AnyModel m = make_model(cfg.text("model.kind"), cfg.text("model.dtype"), mc, opt.seed);
  log << "train-lm: " << cfg.text("model.kind") << ", "
      << std::visit([](const auto& x) { return model::parameter_elements(x.named_parameters()); }, m)
      << " parameters, " << train.size() << " training tokens\n";
  std::visit(
      [&](auto& model) {
        using M = std::decay_t<decltype(model)>;
        using T = typename ModelTraits<M>::value_type;
        training::TrainingTask<T> task;
        if constexpr (ModelTraits<M>::ftp) {
          task = training::make_ftp_lm_task(model, train, &val, opt);
        } else {
          task = training::make_gpt_lm_task(model, train, &val, opt);
        }
        task.config["data.tokenizer"] = cfg.text("data.tokenizer");
        run_training<T>(std::move(task), tc, cfg, out, log);
      },
      m);
}

void cmd_train_grid(const RunConfig& cfg, std::ostream& log) {
  const auto out = prepare_out(cfg);
  const auto train = gridworld::read_dataset(require(cfg, "grid.train"));
  std::optional<gridworld::GridDataset> test;
  if (!cfg.text("grid.test").empty()) test = gridworld::read_dataset(cfg.text("grid.test"));

  auto mc = cfg.model_config();
  if (mc.vocab_size == 0) mc.vocab_size = gridworld::tok::kVocabSize;
  if (!cfg.was_set("model.enc_ctx")) mc.enc_ctx = gridworld::kSequenceLength;
  check_resume_config(cfg, mc);

  gridworld::GridTaskOptions opt;
  opt.batch_size = cfg.count("train.batch_size");
  opt.loss_region = gridworld::parse_loss_region(cfg.text("grid.loss_region"));
  opt.eval_instances = cfg.count("grid.eval_instances");
  opt.seed = std::uint64_t(cfg.integer("run.seed"));
  auto tc = cfg.train_config();
  if (const auto epochs = cfg.count("train.epochs")) {
    const auto micro = gridworld::steps_per_epoch(train.instances.size(), opt.batch_size) * epochs;
    tc.total_steps = (micro + tc.accumulation - 1) / tc.accumulation;
  }
  log << "train-grid: " << train.instances.size() << " instances, " << tc.total_steps << " steps\n";

  AnyModel m = make_model(cfg.text("model.kind"), cfg.text("model.dtype"), mc, opt.seed);
  const auto* test_set = test ? &test->instances : nullptr;
  std::visit(
      [&](auto& model) {
        using M = std::decay_t<decltype(model)>;
        using T = typename ModelTraits<M>::value_type;
        training::TrainingTask<T> task;
        if constexpr (ModelTraits<M>::ftp) {
          task = gridworld::make_ftp_grid_task(model, train.instances, test_set, opt);
        } else {
          task = gridworld::make_gpt_grid_task(model, train.instances, test_set, opt);
        }
        task.config["data.tokenizer"] = kGridTokenizer;
        run_training<T>(std::move(task), tc, cfg, out, log);
        if (test) {
          std::vector<gridworld::GridInstance> subset = test->instances;
          if (const auto limit = cfg.count("grid.eval_limit"); limit && limit < subset.size()) subset.resize(limit);
          const auto report = gridworld::evaluate(gridworld::greedy_generator(model), subset, cfg.count("grid.eval_batch"));
          std::ofstream(out / "eval.json") << report.to_json() << '\n';
          log << "fraction_correct " << report.fraction_correct << " fraction_unique " << report.fraction_unique
              << '\n';
        }
      },
      m);
}

// ---------------------------------------------------------------- generation

std::string cmd_generate(const RunConfig& cfg, std::ostream& log) {
  const auto out = prepare_out(cfg);
  const auto loaded = load_model(require(cfg, "sample.checkpoint"));
  const auto tokenizer = text_tokenizer(loaded);
  const auto prompt = tokenizer.encode(cfg.text("sample.prompt"));
  if (prompt.empty()) throw ConfigError("sample.prompt must not be empty");

  inference::SamplerConfig sc;
  sc.top_k = cfg.count("sample.top_k");
  sc.temperature = cfg.real("sample.temperature");
  sc.lookahead_k = cfg.count("sample.lookahead_k");
  sc.lookahead_l = cfg.count("sample.lookahead_l");
  sc.gamma = cfg.real("sample.gamma");
  sc.seed = std::uint64_t(cfg.integer("run.seed"));
  if (cfg.integer("sample.suppress") >= 0) sc.suppress = TokenId(cfg.integer("sample.suppress"));
  const bool ftp = is_ftp(loaded.model);
  const auto strategy = cfg.text("sample.strategy").empty()
                            ? (ftp ? inference::Strategy::ftp_single : inference::Strategy::gpt)
                            : inference::parse_strategy(cfg.text("sample.strategy"));
  const auto n = cfg.count("sample.n");

  std::mt19937_64 rng(sc.seed);
  const auto tokens = std::visit(
      [&](const auto& model) {
        using M = std::decay_t<decltype(model)>;
        if (n == 0) return prompt;
        if constexpr (ModelTraits<M>::ftp) {
          return inference::generate(model, prompt, n, strategy, sc, rng);
        } else {
          if (strategy != inference::Strategy::gpt) {
            throw ConfigError("strategy " + inference::to_string(strategy) + " needs an FTP model");
          }
          return inference::generate(model, prompt, n, sc, rng);
        }
      },
      loaded.model);

  const auto text = tokenizer.decode(tokens);
  write_json(out / "sample.json", {{"strategy", inference::to_string(strategy)},
                                   {"seed", sc.seed},
                                   {"prompt_tokens", prompt.size()},
                                   {"tokens", tokens},
                                   {"text", text}});
  log << "generated " << tokens.size() - prompt.size() << " tokens (" << inference::to_string(strategy) << ")\n";
  return text;
}

// ---------------------------------------------------------------- gridworld

void cmd_gridworld_gen(const RunConfig& cfg, std::ostream& log) {
  const auto out = prepare_out(cfg);
  gridworld::DatasetParams p;
  p.n_train = cfg.count("grid.n_train");
  p.n_test = cfg.count("grid.n_test");
  p.seed = std::uint64_t(cfg.integer("run.seed"));
  p.len_train = parse_range("grid.len_train", cfg.text("grid.len_train"));
  p.len_test = parse_range("grid.len_test", cfg.text("grid.len_test"));
  p.world.p_obstruction = cfg.real("grid.p_obstruction");
  p.world.p_zero = cfg.real("grid.p_zero");
  const auto pair = gridworld::generate_dataset(p);
  gridworld::write_dataset(out / "train.grid", pair.train);
  gridworld::write_dataset(out / "test.grid", pair.test);
  write_json(out / "dataset.json", {{"train", (out / "train.grid").string()},
                                    {"test", (out / "test.grid").string()},
                                    {"n_train", pair.train.instances.size()},
                                    {"n_test", pair.test.instances.size()}});
  log << "wrote " << pair.train.instances.size() << " training and " << pair.test.instances.size()
      << " test instances to " << out.string() << '\n';
}

void cmd_gridworld_eval(const RunConfig& cfg, std::ostream& log) {
  const auto out = prepare_out(cfg);
  auto test = gridworld::read_dataset(require(cfg, "grid.test")).instances;
  if (const auto limit = cfg.count("grid.eval_limit"); limit && limit < test.size()) test.resize(limit);

  gridworld::EvalReport report;
  const auto& generator = cfg.text("grid.generator");
  if (generator == "oracle") {
    std::map<std::vector<TokenId>, std::vector<TokenId>> answers;
    for (const auto& inst : test) {
      const auto full = gridworld::encode_instance(inst);
      const auto eos = std::find(full.begin() + gridworld::kGridRegion, full.end(), gridworld::tok::kEos);
      answers[gridworld::encode_prompt(inst)] = {full.begin() + gridworld::kGridRegion, eos + 1};
    }
    auto oracle = [&](const std::vector<std::vector<TokenId>>& prompts) {
      std::vector<std::vector<TokenId>> r;
      for (const auto& p : prompts) r.push_back(answers.at(p));
      return r;
    };
    report = gridworld::evaluate(oracle, test, cfg.count("grid.eval_batch"));
  } else if (generator == "model") {
    const auto loaded = load_model(require(cfg, "grid.checkpoint"));
    std::visit(
        [&](const auto& model) {
          report = gridworld::evaluate(gridworld::greedy_generator(model), test, cfg.count("grid.eval_batch"));
        },
        loaded.model);
  } else {
    throw ConfigError("grid.generator must be model or oracle, got '" + generator + "'");
  }
  std::ofstream(out / "eval.json") << report.to_json() << '\n';
  log << "fraction_correct " << report.fraction_correct << " fraction_unique " << report.fraction_unique << '\n';
}

void cmd_gridworld_inspect(const RunConfig& cfg, std::ostream& log) {
  const auto out = prepare_out(cfg);
  const auto& path = cfg.text("grid.test").empty() ? require(cfg, "grid.train") : cfg.text("grid.test");
  const auto data = gridworld::read_dataset(path);
  const auto index = cfg.count("grid.index");
  if (index >= data.instances.size()) {
    throw IndexError("grid.index " + std::to_string(index) + " out of range for " +
                     std::to_string(data.instances.size()) + " instances");
  }
  const auto& inst = data.instances[index];

  auto lines = [](const std::string& s) {
    std::vector<std::string> r;
    std::istringstream in(s);
    for (std::string l; std::getline(in, l);) r.push_back(l);
    return r;
  };
  std::ostringstream text;
  text << "instance " << index << "  program " << gridworld::program_string(inst.program) << " (length "
       << inst.program.size() << ")\n";
  for (std::size_t k = 0; k < inst.starts.size(); ++k) {
    const auto a = lines(gridworld::render(inst.starts[k]));
    const auto b = lines(gridworld::render(inst.stops[k]));
    text << "\npair " << k << ": start" << std::string(a.empty() ? 0 : a[0].size() > 5 ? a[0].size() - 5 : 1, ' ')
         << "   stop\n";
    for (std::size_t r = 0; r < std::max(a.size(), b.size()); ++r) {
      text << (r < a.size() ? a[r] : "") << "   " << (r < b.size() ? b[r] : "") << '\n';
    }
  }
  std::ofstream(out / "inspect.txt") << text.str();
  write_json(out / "inspect.json", {{"index", index},
                                    {"program", gridworld::program_string(inst.program)},
                                    {"length", inst.program.size()},
                                    {"tokens", gridworld::encode_instance(inst)}});
  log << text.str();
}

// ---------------------------------------------------------------- probes

std::vector<FutureProbeRow> future_probe_rows(const AnyModel& m, const data::TokenCorpus& corpus,
                                              const FutureProbeOptions& options, std::uint64_t seed) {
  if (options.offsets == 0) throw ConfigError("probe.offsets must be at least 1");
  const auto& mc = model_config(m);
  if ((is_ftp(m) || options.gpt_decoder_probe) && options.offsets > mc.n_future) {
    throw ConfigError("probe.offsets exceeds the model's n_future");
  }
  const auto [train_part, heldout_part] = split_corpus(corpus, 0.9);
  return std::visit(
      [&](const auto& model) {
        using M = std::decay_t<decltype(model)>;
        using T = typename ModelTraits<M>::value_type;
        const auto source = probes::model_embeddings(model);
        probes::FeatureOptions fo;
        fo.window_len = options.window_len;
        fo.n_future = std::max(options.offsets, mc.n_future);
        fo.n_windows = options.n_windows;
        fo.seed = data::derive_seed(seed, 1);
        const auto train = probes::extract_features(source, train_part, fo);
        fo.n_windows = options.heldout_windows;
        fo.seed = data::derive_seed(seed, 2);
        const auto heldout = probes::extract_features(source, heldout_part, fo);

        std::vector<FutureProbeRow> rows(options.offsets);
        for (std::size_t k = 1; k <= options.offsets; ++k) {
          auto pc = options.budget;
          pc.offset = k;
          pc.seed = data::derive_seed(seed, 10 + k);
          const auto r = probes::train_future_probe(model.table(), train, heldout, pc);
          rows[k - 1].offset = k;
          rows[k - 1].probe_ce = r.heldout.cross_entropy;
          rows[k - 1].probe_ppl = r.heldout.perplexity;
        }
        std::optional<probes::OffsetPerplexity> dec;
        if constexpr (ModelTraits<M>::ftp) {
          dec = probes::decoder_offset_perplexity(model.decoder(), heldout);
        } else {
          {
            numerics::NoGradGuard guard;
            const auto logits = numerics::matmul(heldout.embeddings, model.table(), true);
            std::vector<TokenId> next(heldout.rows());
            for (std::size_t r = 0; r < next.size(); ++r) next[r] = heldout.future[r * heldout.n_future];
            const auto ce = numerics::cross_entropy_rows(logits, next);
            double sum = 0.0;
            for (const auto v : ce.values()) sum += double(v);
            rows[0].native_ce = sum / double(next.size());
            rows[0].native_ppl = std::exp(*rows[0].native_ce);
          }
          if (options.gpt_decoder_probe) {
            auto pc = options.budget;
            pc.seed = data::derive_seed(seed, 3);
            dec = probes::train_decoder_probe<T>(model.table(), mc, train, heldout, pc).heldout;
          }
        }
        if (dec) {
          for (std::size_t k = 0; k < options.offsets; ++k) {
            rows[k].decoder_ce = dec->cross_entropy[k];
            rows[k].decoder_ppl = dec->perplexity[k];
          }
        }
        return rows;
      },
      m);
}

void write_future_csv(const fs::path& path, const std::vector<FutureProbeRow>& rows) {
  std::ofstream out(path);
  out << "offset,probe_ce,probe_ppl,decoder_ce,decoder_ppl,native_ce,native_ppl\n" << std::setprecision(10);
  auto pair = [&](const std::optional<double>& ce, const std::optional<double>& ppl) {
    if (ce) out << ',' << *ce << ',' << *ppl;
    else out << ",,";
  };
  for (const auto& r : rows) {
    out << r.offset << ',' << r.probe_ce << ',' << r.probe_ppl;
    pair(r.decoder_ce, r.decoder_ppl);
    pair(r.native_ce, r.native_ppl);
    out << '\n';
  }
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

void cmd_probe_similarity(const RunConfig& cfg, std::ostream& log) {
  const auto out = prepare_out(cfg);
  const auto loaded = load_model(require(cfg, "probe.checkpoint"));
  const auto corpus = load_corpus(require(cfg, "probe.corpus"), text_tokenizer(loaded));
  probes::SeparationOptions so;
  so.max_sep = cfg.count("probe.max_sep");
  so.n_sequences = cfg.count("probe.n_sequences");
  so.seq_len = cfg.count("probe.seq_len");
  so.far_pairs = cfg.count("probe.far_pairs");
  so.seed = std::uint64_t(cfg.integer("run.seed"));
  const auto stats = std::visit(
      [&](const auto& model) { return probes::separation_stats(probes::model_embeddings(model), corpus, so); },
      loaded.model);
  stats.write_csv(out / "similarity.csv");
  write_json(out / "similarity.json", {{"adjacent_mean", stats.mean.at(0)},
                                       {"adjacent_std", stats.stddev.at(0)},
                                       {"far_mean", stats.far_mean},
                                       {"far_std", stats.far_stddev},
                                       {"max_sep", stats.max_sep},
                                       {"seq_len", stats.seq_len},
                                       {"zero_norm_excluded", stats.zero_norm_excluded}});
  log << "adjacent cosine mean " << stats.mean[0] << " std " << stats.stddev[0] << '\n';
}

void cmd_probe_future(const RunConfig& cfg, std::ostream& log) {
  const auto out = prepare_out(cfg);
  const auto loaded = load_model(require(cfg, "probe.checkpoint"));
  const auto corpus = load_corpus(require(cfg, "probe.corpus"), text_tokenizer(loaded));
  FutureProbeOptions fo;
  fo.offsets = cfg.count("probe.offsets");
  fo.n_windows = cfg.count("probe.n_windows");
  fo.heldout_windows = cfg.count("probe.heldout_windows");
  fo.window_len = cfg.count("probe.seq_len");
  fo.gpt_decoder_probe = cfg.integer("probe.decoder") != 0;
  fo.budget.expansion = cfg.count("probe.expansion");
  fo.budget.epochs = cfg.count("probe.epochs");
  fo.budget.lr = cfg.real("probe.lr");
  fo.budget.batch_size = cfg.count("probe.batch_size");
  const auto rows = future_probe_rows(loaded.model, corpus, fo, std::uint64_t(cfg.integer("run.seed")));
  write_future_csv(out / "future.csv", rows);
  json j = json::array();
  for (const auto& r : rows) {
    json row = {{"offset", r.offset}, {"probe_ppl", r.probe_ppl}, {"probe_ce", r.probe_ce}};
    if (r.decoder_ppl) {
      row["decoder_ppl"] = *r.decoder_ppl;
      row["decoder_ce"] = *r.decoder_ce;
    }
    if (r.native_ppl) {
      row["native_ppl"] = *r.native_ppl;
      row["native_ce"] = *r.native_ce;
    }
    j.push_back(row);
    log << "k=" << r.offset << " probe ppl " << r.probe_ppl;
    if (r.decoder_ppl) log << " decoder ppl " << *r.decoder_ppl;
    log << '\n';
  }
  write_json(out / "future.json", {{"kind", is_ftp(loaded.model) ? "ftp" : "gpt"}, {"offsets", j}});
}

void cmd_probe_classify(const RunConfig& cfg, std::ostream& log) {
  const auto out = prepare_out(cfg);
  const auto loaded = load_model(require(cfg, "probe.checkpoint"));
  const auto tokenizer = text_tokenizer(loaded);
  const auto texts = probes::read_labeled_texts(require(cfg, "probe.labels"));
  probes::ClassifyConfig cc;
  cc.hidden = cfg.count("probe.hidden");
  cc.epochs = cfg.count("probe.epochs");
  cc.lr = cfg.real("probe.lr");
  cc.batch_size = cfg.count("probe.batch_size");
  cc.heldout_fraction = cfg.real("probe.heldout_fraction");
  cc.seed = std::uint64_t(cfg.integer("run.seed"));
  const probes::TextTokenizer tokenize = [&](const std::string& s) { return tokenizer.encode(s); };
  const auto r = std::visit(
      [&](const auto& model) { return probes::mean_pool_classify(probes::model_embeddings(model), texts, tokenize, cc); },
      loaded.model);
  write_json(out / "classify.json", {{"labels", r.labels},
                                     {"n_train", r.n_train},
                                     {"n_heldout", r.n_heldout},
                                     {"skipped", r.skipped},
                                     {"val_loss", r.val_loss},
                                     {"val_accuracy", r.val_accuracy},
                                     {"chance", r.labels.empty() ? 0.0 : 1.0 / double(r.labels.size())}});
  log << "val_accuracy " << r.val_accuracy << " over " << r.n_heldout << " held-out texts\n";
}

// ---------------------------------------------------------------- parameter count

void cmd_param_count(const RunConfig& cfg, std::ostream& log) {
  const auto out = prepare_out(cfg);
  auto mc = cfg.model_config();
  if (mc.vocab_size == 0) mc.vocab_size = data::Tokenizer::kBaseVocab;
  const bool ftp = cfg.text("model.kind") == "ftp";
  if (!ftp && cfg.text("model.kind") != "gpt") throw ConfigError("model.kind must be gpt or ftp");
  mc.validate(ftp);
  auto pc = model::count_parameters(mc);
  if (!ftp) pc.projection = pc.decoder_layers = pc.decoder_final_norm = pc.decoder_positions = 0;
  const json j = {{"kind", cfg.text("model.kind")},
                  {"encoder", pc.encoder()},
                  {"encoder_layers", pc.encoder_layers},
                  {"encoder_final_norm", pc.encoder_final_norm},
                  {"projection", pc.projection},
                  {"decoder", pc.decoder()},
                  {"decoder_layers", pc.decoder_layers},
                  {"decoder_final_norm", pc.decoder_final_norm},
                  {"decoder_positions", pc.decoder_positions},
                  {"embeddings", pc.embeddings},
                  {"total", pc.total()}};
  write_json(out / "param_count.json", j);
  log << j.dump(2) << '\n';
}

}  // namespace ftp::cli

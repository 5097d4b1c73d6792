#include "ftp/probes/probes.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <numeric>
#include <random>
#include <set>

#include "ftp/core/errors.hpp"
#include "ftp/training/loss.hpp"
#include "ftp/training/trainer.hpp"

namespace ftp::probes {

using numerics::NoGradGuard;

namespace {

double norm(std::span<const double> a) {
  double s = 0.0;
  for (double v : a) s += v * v;
  return std::sqrt(s);
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Embeddings [len, dim] widened to double with per-row norms.
struct Rows {
  std::size_t len = 0, dim = 0;
  std::vector<double> v;
  std::vector<double> norms;

  std::span<const double> row(std::size_t t) const { return std::span(v).subspan(t * dim, dim); }
};

template <typename T>
Rows embed_rows(const EmbeddingSource<T>& source, std::span<const TokenId> tokens) {
  if (tokens.size() > source.max_len) {
    throw ContractError("sequence of " + std::to_string(tokens.size()) + " tokens exceeds the model context of " +
                        std::to_string(source.max_len));
  }
  const auto e = source.embed(tokens);
  Rows r;
  r.len = tokens.size();
  r.dim = source.dim;
  if (e.numel() != r.len * r.dim) throw DimensionError("embedding source returned the wrong number of values");
  r.v.assign(e.values().begin(), e.values().end());
  r.norms.resize(r.len);
  for (std::size_t t = 0; t < r.len; ++t) r.norms[t] = norm(r.row(t));
  return r;
}

struct Moments {
  double sum = 0.0, sumsq = 0.0;
  std::size_t n = 0;

  void add(double x) {
    sum += x;
    sumsq += x * x;
    ++n;
  }
  double mean() const { return n ? sum / double(n) : 0.0; }
  double stddev() const {
    if (!n) return 0.0;
    const double m = mean();
    return std::sqrt(std::max(0.0, sumsq / double(n) - m * m));
  }
};

std::vector<std::size_t> sample_starts(const data::TokenCorpus& corpus, std::size_t n, std::size_t span,
                                       std::mt19937_64& rng) {
  if (corpus.size() < span) {
    throw ContractError("corpus of " + std::to_string(corpus.size()) + " tokens is shorter than the " +
                        std::to_string(span) + "-token window");
  }
  std::uniform_int_distribution<std::size_t> pick(0, corpus.size() - span);
  std::vector<std::size_t> out(n);
  for (auto& s : out) s = pick(rng);
  return out;
}

// Shuffled row indices, one permutation per epoch.
class RowStream {
 public:
  RowStream(std::size_t n, std::size_t batch, std::uint64_t seed) : n_(n), batch_(batch), rng_(seed) {
    if (n == 0) throw ContractError("probe training set is empty");
    order_.resize(n);
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::shuffle(order_.begin(), order_.end(), rng_);
  }

  std::vector<TokenId> next() {
    std::vector<TokenId> out;
    const std::size_t b = std::min(batch_, n_);
    while (out.size() < b) {
      if (cursor_ == n_) {
        std::shuffle(order_.begin(), order_.end(), rng_);
        cursor_ = 0;
      }
      out.push_back(TokenId(order_[cursor_++]));
    }
    return out;
  }

 private:
  std::size_t n_, batch_;
  std::mt19937_64 rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

training::TrainConfig probe_schedule(double lr, double weight_decay, std::size_t batch, std::size_t steps,
                                     std::uint64_t seed) {
  training::TrainConfig tc;
  tc.lr_max = lr;
  tc.lr_min = 0.0;
  tc.total_steps = std::max<std::size_t>(steps, 1);
  tc.warmup_steps = tc.total_steps / 20;
  tc.weight_decay = weight_decay;
  tc.batch_size = batch;
  tc.seed = seed;
  return tc;
}

template <typename T>
Tensor<T> linear_init(std::size_t out, std::size_t in, std::mt19937_64& rng) {
  return numerics::normal<T>({out, in}, 1.0 / std::sqrt(double(in)), rng, true);
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, std::span<const TokenId> rows) {
  return numerics::embedding(x, rows, {rows.size()});
}

template <typename T>
void run_trainer(std::vector<model::NamedParameter<T>> params, std::function<training::LossValue<T>()> next,
                 const training::TrainConfig& tc) {
  training::TrainingTask<T> task;
  task.params = std::move(params);
  task.next_loss = std::move(next);
  training::Trainer<T> trainer(std::move(task), tc);
  trainer.run();
}

}  // namespace

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("cosine of vectors with different lengths");
  const double na = norm(a), nb = norm(b);
  if (na == 0.0 || nb == 0.0) throw ContractError("cosine of a zero-norm vector");
  return dot(a, b) / (na * nb);
}

template <typename T>
EmbeddingSource<T> model_embeddings(const model::GptModel<T>& model) {
  return {model.config().dim, model.config().enc_ctx, [&model](std::span<const TokenId> tokens) {
            NoGradGuard guard;
            const std::size_t len = tokens.size();
            return numerics::reshape(model.encoder_forward(tokens, 1, len), {len, model.config().dim});
          }};
}

template <typename T>
EmbeddingSource<T> model_embeddings(const model::FtpModel<T>& model) {
  return {model.config().dim, model.config().enc_ctx, [&model](std::span<const TokenId> tokens) {
            NoGradGuard guard;
            const std::size_t len = tokens.size();
            return numerics::reshape(model.encoder_forward(tokens, 1, len), {len, model.config().dim});
          }};
}

template <typename T>
AdjacentSeries adjacent_cosine_series(const EmbeddingSource<T>& source, std::span<const TokenId> tokens) {
  if (tokens.size() < 2) throw ContractError("adjacent cosine series needs at least two tokens");
  const auto r = embed_rows(source, tokens);
  AdjacentSeries out;
  out.values.reserve(r.len - 1);
  for (std::size_t t = 0; t + 1 < r.len; ++t) {
    if (r.norms[t] == 0.0 || r.norms[t + 1] == 0.0) {
      ++out.zero_norm_excluded;
      continue;
    }
    out.values.push_back(dot(r.row(t), r.row(t + 1)) / (r.norms[t] * r.norms[t + 1]));
  }
  return out;
}

template <typename T>
SimilarityStats separation_stats(const EmbeddingSource<T>& source, const data::TokenCorpus& corpus,
                                 const SeparationOptions& options) {
  const std::size_t len = options.seq_len ? options.seq_len : source.max_len;
  if (options.max_sep == 0 || options.max_sep >= len) {
    throw ContractError("max_sep " + std::to_string(options.max_sep) + " must lie in [1, " + std::to_string(len) +
                        ")");
  }
  if (options.n_sequences < 2) throw ContractError("separation stats need at least two sequences");
  std::mt19937_64 rng(options.seed);
  SimilarityStats s;
  s.max_sep = options.max_sep;
  s.seq_len = len;
  s.starts = sample_starts(corpus, options.n_sequences, len, rng);
  std::vector<Rows> seqs;
  for (auto start : s.starts) {
    seqs.push_back(embed_rows(source, std::span(corpus.ids).subspan(start, len)));
    for (double n : seqs.back().norms) s.zero_norm_excluded += n == 0.0;
  }
  std::vector<Moments> by_sep(options.max_sep);
  for (const auto& r : seqs) {
    for (std::size_t d = 1; d <= options.max_sep; ++d) {
      for (std::size_t t = 0; t + d < len; ++t) {
        if (r.norms[t] == 0.0 || r.norms[t + d] == 0.0) continue;
        by_sep[d - 1].add(dot(r.row(t), r.row(t + d)) / (r.norms[t] * r.norms[t + d]));
      }
    }
  }
  for (const auto& m : by_sep) {
    s.mean.push_back(m.mean());
    s.stddev.push_back(m.stddev());
    s.count.push_back(m.n);
  }
  Moments far;
  std::uniform_int_distribution<std::size_t> pick_seq(0, seqs.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_pos(0, len - 1);
  for (std::size_t i = 0; i < options.far_pairs; ++i) {
    const std::size_t a = pick_seq(rng);
    std::size_t b = pick_seq(rng);
    while (b == a) b = pick_seq(rng);
    const std::size_t t = pick_pos(rng), u = pick_pos(rng);
    if (seqs[a].norms[t] == 0.0 || seqs[b].norms[u] == 0.0) continue;
    far.add(dot(seqs[a].row(t), seqs[b].row(u)) / (seqs[a].norms[t] * seqs[b].norms[u]));
  }
  s.far_mean = far.mean();
  s.far_stddev = far.stddev();
  s.far_count = far.n;
  return s;
}

void SimilarityStats::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "separation,mean,std,count\n";
  out.precision(10);
  for (std::size_t d = 0; d < mean.size(); ++d) {
    out << d + 1 << ',' << mean[d] << ',' << stddev[d] << ',' << count[d] << '\n';
  }
  out << "far," << far_mean << ',' << far_stddev << ',' << far_count << '\n';
}

template <typename T>
FeatureSet<T> extract_features(const EmbeddingSource<T>& source, const data::TokenCorpus& corpus,
                               const FeatureOptions& options) {
  const std::size_t len = options.window_len ? options.window_len : source.max_len;
  const std::size_t n = options.n_future;
  if (n == 0) throw ContractError("features need at least one future token");
  std::mt19937_64 rng(options.seed);
  const auto starts = sample_starts(corpus, options.n_windows, len + n, rng);
  FeatureSet<T> f;
  f.n_future = n;
  std::vector<T> values;
  values.reserve(options.n_windows * len * source.dim);
  for (auto start : starts) {
    const auto win = std::span(corpus.ids).subspan(start, len + n);
    const auto e = source.embed(win.first(len));
    values.insert(values.end(), e.values().begin(), e.values().end());
    for (std::size_t t = 0; t < len; ++t) {
      f.current.push_back(win[t]);
      for (std::size_t j = 0; j < n; ++j) f.future.push_back(win[t + 1 + j]);
    }
  }
  f.embeddings = Tensor<T>::from_values({f.current.size(), source.dim}, std::move(values));
  return f;
}

void ProbeConfig::validate() const {
  if (offset < 1) throw ConfigError("probe offset must be at least 1");
  if (expansion < 1) throw ConfigError("probe expansion must be at least 1");
  if (epochs < 1) throw ConfigError("probe epochs must be at least 1");
  if (!(lr > 0.0)) throw ConfigError("probe lr must be positive");
  if (batch_size < 1) throw ConfigError("probe batch size must be positive");
}

template <typename T>
Tensor<T> MlpProbe<T>::logits(const Tensor<T>& e) const {
  auto h = numerics::gelu(numerics::add(numerics::matmul(e, w1, true), b1));
  auto o = numerics::add(numerics::matmul(h, w2, true), b2);
  return numerics::matmul(o, head, true);
}

template <typename T>
std::vector<model::NamedParameter<T>> MlpProbe<T>::parameters() const {
  return {{"probe.w1", w1, true}, {"probe.b1", b1, false}, {"probe.w2", w2, true}, {"probe.b2", b2, false}};
}

template <typename T>
FutureProbe<T> train_future_probe(const Tensor<T>& lm_table, const FeatureSet<T>& train, const FeatureSet<T>& heldout,
                                  const ProbeConfig& config) {
  config.validate();
  if (config.offset > train.n_future || config.offset > heldout.n_future) {
    throw ContractError("probe offset " + std::to_string(config.offset) + " exceeds the feature window");
  }
  const std::size_t dim = lm_table.shape()[1];
  const std::size_t hidden = config.expansion * dim;
  std::mt19937_64 rng(config.seed);
  FutureProbe<T> out;
  auto& p = out.probe;
  p.w1 = linear_init<T>(hidden, dim, rng);
  p.b1 = Tensor<T>::zeros({hidden}, true);
  p.w2 = linear_init<T>(dim, hidden, rng);
  p.b2 = Tensor<T>::zeros({dim}, true);
  p.head = lm_table.detach();

  const std::size_t k = config.offset;
  auto targets_of = [k](const FeatureSet<T>& f, std::span<const TokenId> rows) {
    std::vector<TokenId> t(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) t[i] = f.future[std::size_t(rows[i]) * f.n_future + k - 1];
    return t;
  };
  auto stream = std::make_shared<RowStream>(train.rows(), config.batch_size, config.seed + 1);
  auto next = [&, stream]() {
    const auto rows = stream->next();
    training::LossValue<T> lv;
    lv.loss = numerics::cross_entropy_logits(p.logits(gather_rows(train.embeddings, rows)), targets_of(train, rows));
    lv.loss_k0 = double(lv.loss.item());
    return lv;
  };
  const std::size_t steps = config.epochs * ((train.rows() + config.batch_size - 1) / config.batch_size);
  run_trainer<T>(p.parameters(), next,
                 probe_schedule(config.lr, config.weight_decay, config.batch_size, steps, config.seed));

  NoGradGuard guard;
  double total = 0.0;
  for (std::size_t s = 0; s < heldout.rows(); s += 512) {
    std::vector<TokenId> rows(std::min<std::size_t>(512, heldout.rows() - s));
    std::iota(rows.begin(), rows.end(), TokenId(s));
    const auto ce = numerics::cross_entropy_rows(p.logits(gather_rows(heldout.embeddings, rows)),
                                                 targets_of(heldout, rows));
    for (T v : ce.values()) total += double(v);
  }
  out.heldout.cross_entropy = total / double(heldout.rows());
  out.heldout.perplexity = std::exp(out.heldout.cross_entropy);
  return out;
}

namespace {

template <typename T>
void decoder_rows(const FeatureSet<T>& f, std::span<const TokenId> rows, std::size_t n, std::vector<TokenId>& dec_in,
                  std::vector<TokenId>& targets) {
  dec_in.clear();
  targets.clear();
  for (TokenId r : rows) {
    const std::size_t base = std::size_t(r) * f.n_future;
    dec_in.push_back(f.current[std::size_t(r)]);
    for (std::size_t j = 0; j + 1 < n; ++j) dec_in.push_back(f.future[base + j]);
    for (std::size_t j = 0; j < n; ++j) targets.push_back(f.future[base + j]);
  }
}

}  // namespace

template <typename T>
OffsetPerplexity decoder_offset_perplexity(const model::FtpDecoder<T>& decoder, const FeatureSet<T>& features,
                                           std::size_t batch_rows) {
  const std::size_t n = decoder.positions.shape()[0];
  if (n > features.n_future) throw ContractError("decoder window exceeds the feature window");
  NoGradGuard guard;
  std::vector<double> sums(n, 0.0);
  std::vector<TokenId> dec_in, targets;
  for (std::size_t s = 0; s < features.rows(); s += batch_rows) {
    std::vector<TokenId> rows(std::min(batch_rows, features.rows() - s));
    std::iota(rows.begin(), rows.end(), TokenId(s));
    decoder_rows(features, rows, n, dec_in, targets);
    const auto e = gather_rows(features.embeddings, rows);
    const auto logits = decoder.forward(dec_in, n, decoder.project(e));
    const std::size_t v = logits.shape()[2];
    const auto ce = numerics::cross_entropy_rows(numerics::reshape(logits, {rows.size() * n, v}), targets);
    for (std::size_t i = 0; i < ce.numel(); ++i) sums[i % n] += double(ce.values()[i]);
  }
  OffsetPerplexity out;
  for (double s : sums) {
    out.cross_entropy.push_back(s / double(features.rows()));
    out.perplexity.push_back(std::exp(out.cross_entropy.back()));
  }
  return out;
}

template <typename T>
DecoderProbe<T> train_decoder_probe(const Tensor<T>& lm_table, const model::ModelConfig& config,
                                    const FeatureSet<T>& train, const FeatureSet<T>& heldout,
                                    const ProbeConfig& budget) {
  budget.validate();
  config.validate(true);
  const std::size_t n = config.n_future;
  if (n > train.n_future || n > heldout.n_future) throw ContractError("decoder window exceeds the feature window");
  if (lm_table.shape()[1] != config.dim) throw DimensionError("decoder dim differs from the frozen embeddings");
  std::mt19937_64 rng(budget.seed);
  DecoderProbe<T> out{model::FtpDecoder<T>(config, lm_table.detach(), rng), {}};
  std::vector<model::NamedParameter<T>> params;
  out.decoder.append_parameters(params);

  auto stream = std::make_shared<RowStream>(train.rows(), budget.batch_size, budget.seed + 1);
  const double gamma = config.gamma;
  const auto& dec = out.decoder;
  auto next = [&, stream, n, gamma]() {
    const auto rows = stream->next();
    std::vector<TokenId> dec_in, targets;
    decoder_rows(train, rows, n, dec_in, targets);
    const auto logits = dec.forward(dec_in, n, dec.project(gather_rows(train.embeddings, rows)));
    const std::vector<std::uint8_t> mask(targets.size(), 1);
    return training::ftp_loss(logits, targets, mask, gamma);
  };
  const std::size_t steps = budget.epochs * ((train.rows() + budget.batch_size - 1) / budget.batch_size);
  run_trainer<T>(params, next, probe_schedule(budget.lr, budget.weight_decay, budget.batch_size, steps, budget.seed));
  out.heldout = decoder_offset_perplexity(out.decoder, heldout);
  return out;
}

std::vector<LabeledText> read_labeled_texts(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<LabeledText> out;
  std::string line;
  std::uint64_t offset = 0;
  while (std::getline(in, line)) {
    const std::uint64_t at = offset;
    offset += line.size() + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) throw FormatError("expected 'label<TAB>text'", at);
    out.push_back({line.substr(0, tab), line.substr(tab + 1)});
  }
  return out;
}

template <typename T>
std::vector<double> mean_pool(const EmbeddingSource<T>& source, std::span<const TokenId> tokens) {
  if (tokens.size() < 2) throw ContractError("mean pooling needs at least two tokens");
  const auto r = embed_rows(source, tokens.first(std::min(tokens.size(), source.max_len)));
  std::vector<double> out(r.dim, 0.0);
  for (std::size_t t = 1; t < r.len; ++t) {
    const auto row = r.row(t);
    for (std::size_t i = 0; i < r.dim; ++i) out[i] += row[i];
  }
  for (auto& v : out) v /= double(r.len - 1);
  return out;
}

template <typename T>
ClassifyResult mean_pool_classify(const EmbeddingSource<T>& source, const std::vector<LabeledText>& data,
                                  const TextTokenizer& tokenize, const ClassifyConfig& config) {
  if (!(config.heldout_fraction > 0.0 && config.heldout_fraction < 1.0)) {
    throw ConfigError("heldout_fraction must lie in (0, 1)");
  }
  if (config.epochs < 1 || config.batch_size < 1 || !(config.lr > 0.0)) {
    throw ConfigError("classifier needs positive epochs, batch size and lr");
  }
  ClassifyResult res;
  std::set<std::string> label_set;
  for (const auto& d : data) label_set.insert(d.label);
  res.labels.assign(label_set.begin(), label_set.end());
  if (res.labels.size() < 2) throw ContractError("classification needs at least two labels");
  std::map<std::string, TokenId> label_id;
  for (std::size_t i = 0; i < res.labels.size(); ++i) label_id[res.labels[i]] = TokenId(i);

  const std::size_t dim = source.dim;
  std::vector<T> pooled;
  std::vector<TokenId> labels;
  for (const auto& d : data) {
    const auto ids = tokenize(d.text);
    if (ids.size() < 2) {
      ++res.skipped;
      continue;
    }
    const auto p = mean_pool(source, ids);
    pooled.insert(pooled.end(), p.begin(), p.end());
    labels.push_back(label_id.at(d.label));
  }
  const std::size_t n = labels.size();
  if (n < 2) throw ContractError("fewer than two usable texts");
  std::mt19937_64 rng(config.seed);
  std::vector<TokenId> order(n);
  std::iota(order.begin(), order.end(), TokenId(0));
  std::shuffle(order.begin(), order.end(), rng);
  res.n_heldout = std::clamp<std::size_t>(std::size_t(std::lround(double(n) * config.heldout_fraction)), 1, n - 1);
  res.n_train = n - res.n_heldout;
  const std::vector<TokenId> train_rows(order.begin(), order.begin() + std::ptrdiff_t(res.n_train));
  const std::vector<TokenId> held_rows(order.begin() + std::ptrdiff_t(res.n_train), order.end());
  const auto features = Tensor<T>::from_values({n, dim}, std::move(pooled));

  const std::size_t hidden = config.hidden ? config.hidden : 4 * dim;
  const std::size_t classes = res.labels.size();
  auto w1 = linear_init<T>(hidden, dim, rng), w2 = linear_init<T>(hidden, hidden, rng);
  auto w3 = linear_init<T>(classes, hidden, rng);
  auto b1 = Tensor<T>::zeros({hidden}, true), b2 = Tensor<T>::zeros({hidden}, true);
  auto b3 = Tensor<T>::zeros({classes}, true);
  auto forward = [&](const Tensor<T>& x) {
    auto h = numerics::gelu(numerics::add(numerics::matmul(x, w1, true), b1));
    h = numerics::gelu(numerics::add(numerics::matmul(h, w2, true), b2));
    return numerics::add(numerics::matmul(h, w3, true), b3);
  };
  auto pick = [&](std::span<const TokenId> rows) {
    std::vector<TokenId> t(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) t[i] = labels[std::size_t(rows[i])];
    return t;
  };
  auto stream = std::make_shared<RowStream>(res.n_train, config.batch_size, config.seed + 1);
  auto next = [&, stream]() {
    auto local = stream->next();
    for (auto& r : local) r = train_rows[std::size_t(r)];
    training::LossValue<T> lv;
    lv.loss = numerics::cross_entropy_logits(forward(gather_rows(features, local)), pick(local));
    lv.loss_k0 = double(lv.loss.item());
    return lv;
  };
  std::vector<model::NamedParameter<T>> params{{"cls.w1", w1, true}, {"cls.b1", b1, false}, {"cls.w2", w2, true},
                                               {"cls.b2", b2, false}, {"cls.w3", w3, true}, {"cls.b3", b3, false}};
  const std::size_t steps = config.epochs * ((res.n_train + config.batch_size - 1) / config.batch_size);
  run_trainer<T>(params, next, probe_schedule(config.lr, config.weight_decay, config.batch_size, steps, config.seed));

  NoGradGuard guard;
  const auto logits = forward(gather_rows(features, held_rows));
  const auto targets = pick(held_rows);
  const auto ce = numerics::cross_entropy_rows(logits, targets);
  std::size_t right = 0;
  double loss = 0.0;
  for (std::size_t i = 0; i < held_rows.size(); ++i) {
    loss += double(ce.values()[i]);
    const auto row = logits.values().subspan(i * classes, classes);
    const auto best = std::size_t(std::max_element(row.begin(), row.end()) - row.begin());
    right += TokenId(best) == targets[i];
  }
  res.val_loss = loss / double(held_rows.size());
  res.val_accuracy = double(right) / double(held_rows.size());
  return res;
}

#define FTP_INSTANTIATE(T)                                                                                         \
  template EmbeddingSource<T> model_embeddings(const model::GptModel<T>&);                                       \
  template EmbeddingSource<T> model_embeddings(const model::FtpModel<T>&);                                       \
  template AdjacentSeries adjacent_cosine_series(const EmbeddingSource<T>&, std::span<const TokenId>);           \
  template SimilarityStats separation_stats(const EmbeddingSource<T>&, const data::TokenCorpus&,                 \
                                            const SeparationOptions&);                                           \
  template FeatureSet<T> extract_features(const EmbeddingSource<T>&, const data::TokenCorpus&,                   \
                                          const FeatureOptions&);                                                \
  template struct MlpProbe<T>;                                                                                     \
  template FutureProbe<T> train_future_probe(const Tensor<T>&, const FeatureSet<T>&, const FeatureSet<T>&,       \
                                             const ProbeConfig&);                                                \
  template OffsetPerplexity decoder_offset_perplexity(const model::FtpDecoder<T>&, const FeatureSet<T>&,         \
                                                      std::size_t);                                              \
  template DecoderProbe<T> train_decoder_probe(const Tensor<T>&, const model::ModelConfig&, const FeatureSet<T>&, \
                                               const FeatureSet<T>&, const ProbeConfig&);                        \
  template std::vector<double> mean_pool(const EmbeddingSource<T>&, std::span<const TokenId>);                   \
  template ClassifyResult mean_pool_classify(const EmbeddingSource<T>&, const std::vector<LabeledText>&,         \
                                             const TextTokenizer&, const ClassifyConfig&);

FTP_INSTANTIATE(float)
FTP_INSTANTIATE(double)
#undef FTP_INSTANTIATE

}  // namespace ftp::probes

#include "ftp/inference/generation.hpp"

#include <algorithm>

#include "ftp/core/errors.hpp"

namespace ftp::inference {

using numerics::Tensor;

namespace {

void require_context(std::span<const TokenId> context, std::size_t limit, const char* what) {
  if (context.empty()) throw ContractError(std::string(what) + ": empty context");
  if (context.size() > limit) {
    throw ContractError(std::string(what) + ": context of " + std::to_string(context.size()) +
                        " tokens exceeds enc_ctx " + std::to_string(limit));
  }
}

template <typename T>
std::vector<double> row_to_double(const Tensor<T>& t, std::size_t row, std::size_t width) {
  auto v = t.values().subspan(row * width, width);
  return std::vector<double>(v.begin(), v.end());
}

// Logits [R, V] of the shared LM head applied to embeddings [R, dim].
template <typename T>
Tensor<T> lm_head(const Tensor<T>& e, const Tensor<T>& table) {
  return numerics::matmul(e, table, true);
}

template <typename T>
Tensor<T> ftp_first_logits(const model::FtpModel<T>& model, const Tensor<T>& e, std::span<const TokenId> seeds) {
  auto pseudo = model.project_pseudo_sequence(e);
  return model.decoder_forward(seeds, 1, pseudo);
}

}  // namespace

template <typename T>
std::vector<double> next_logits_gpt(const model::GptModel<T>& model, std::span<const TokenId> context) {
  require_context(context, model.config().enc_ctx, "next_logits_gpt");
  numerics::NoGradGuard guard;
  auto logits = model.forward(context, 1, context.size());
  return row_to_double(logits, context.size() - 1, model.config().vocab_size);
}

template <typename T>
std::vector<double> next_logits_ftp(const model::FtpModel<T>& model, std::span<const TokenId> context) {
  require_context(context, model.config().enc_ctx, "next_logits_ftp");
  numerics::NoGradGuard guard;
  const std::size_t len = context.size();
  auto enc = model.encoder_forward(context, 1, len);
  auto last = numerics::reshape(numerics::narrow(enc, 1, len - 1, 1), {1, model.config().dim});
  const TokenId seed = context.back();
  return row_to_double(ftp_first_logits(model, last, std::span<const TokenId>(&seed, 1)), 0,
                       model.config().vocab_size);
}

template <typename T>
ContextEncoder<T>::ContextEncoder(const model::Encoder<T>& encoder, std::size_t context_limit)
    : encoder_(&encoder), limit_(context_limit) {}

template <typename T>
Tensor<T> ContextEncoder<T>::last_embedding(std::span<const TokenId> context) {
  if (context.empty()) throw ContractError("encoder context is empty");
  auto window = context.size() > limit_ ? context.subspan(context.size() - limit_) : context;
  const bool extends = window.size() >= tokens_.size() && !tokens_.empty() &&
                       std::equal(tokens_.begin(), tokens_.end(), window.begin());
  if (!extends) {
    cache_ = {};
    tokens_.clear();
  }
  if (window.size() > tokens_.size()) {
    auto fresh = window.subspan(tokens_.size());
    auto h = encoder_->extend(cache_, fresh, 1, fresh.size());
    const std::size_t dim = h.shape()[2];
    last_ = numerics::reshape(numerics::narrow(h, 1, fresh.size() - 1, 1), {1, dim});
    tokens_.assign(window.begin(), window.end());
  }
  return last_;
}

template <typename T>
FtpDecoderOracle<T>::FtpDecoderOracle(const model::FtpModel<T>& model, Tensor<T> pseudo)
    : model_(&model), pseudo_(std::move(pseudo)) {}

template <typename T>
std::size_t FtpDecoderOracle<T>::vocab_size() const {
  return model_->config().vocab_size;
}

template <typename T>
std::size_t FtpDecoderOracle<T>::window() const {
  return model_->config().n_future;
}

template <typename T>
std::vector<std::vector<double>> FtpDecoderOracle<T>::next(const std::vector<std::vector<TokenId>>& prefixes) const {
  numerics::NoGradGuard guard;
  const std::size_t rows = prefixes.size();
  const std::size_t nd = prefixes.front().size();
  std::vector<TokenId> flat;
  flat.reserve(rows * nd);
  for (const auto& p : prefixes) {
    if (p.size() != nd) throw DimensionError("decoder prefixes must share one length");
    flat.insert(flat.end(), p.begin(), p.end());
  }
  const auto src = pseudo_.values();
  std::vector<T> rep;
  rep.reserve(rows * src.size());
  for (std::size_t r = 0; r < rows; ++r) rep.insert(rep.end(), src.begin(), src.end());
  const auto& ps = pseudo_.shape();
  auto pseudo = Tensor<T>::from_values({rows, ps[1], ps[2]}, std::move(rep));
  auto logits = model_->decoder_forward(flat, nd, pseudo);
  const std::size_t v = vocab_size();
  std::vector<std::vector<double>> out(rows);
  for (std::size_t r = 0; r < rows; ++r) out[r] = row_to_double(logits, r * nd + nd - 1, v);
  return out;
}

template <typename T>
std::vector<TokenId> generate(const model::GptModel<T>& model, std::span<const TokenId> prompt, std::size_t n,
                              const SamplerConfig& config, std::mt19937_64& rng) {
  config.validate();
  ContextEncoder<T> enc(model.encoder(), model.config().enc_ctx);
  const std::size_t v = model.config().vocab_size;
  auto next = [&](std::span<const TokenId> context) {
    numerics::NoGradGuard guard;
    auto logits = row_to_double(lm_head(enc.last_embedding(context), model.table()), 0, v);
    return sample_topk(logits, std::min(config.top_k, v - (config.suppress ? 1 : 0)), config.temperature, rng,
                       config.suppress);
  };
  return generate_tokens(next, prompt, n);
}

template <typename T>
std::vector<TokenId> generate(const model::FtpModel<T>& model, std::span<const TokenId> prompt, std::size_t n,
                              Strategy strategy, const SamplerConfig& config, std::mt19937_64& rng) {
  if (strategy == Strategy::gpt) throw ConfigError("strategy gpt needs a GPT model");
  config.validate();
  ContextEncoder<T> enc(model.encoder(), model.config().enc_ctx);
  const std::size_t v = model.config().vocab_size;
  auto next = [&](std::span<const TokenId> context) -> TokenId {
    numerics::NoGradGuard guard;
    auto e = enc.last_embedding(context);
    const TokenId seed = context.back();
    if (strategy == Strategy::ftp_single) {
      auto logits = row_to_double(ftp_first_logits(model, e, std::span<const TokenId>(&seed, 1)), 0, v);
      return sample_topk(logits, std::min(config.top_k, v - (config.suppress ? 1 : 0)), config.temperature, rng,
                         config.suppress);
    }
    FtpDecoderOracle<T> oracle(model, model.project_pseudo_sequence(e));
    return lookahead_sample(oracle, seed, config, rng);
  };
  return generate_tokens(next, prompt, n);
}

namespace {

template <typename Step>
std::vector<std::vector<TokenId>> greedy_loop(const std::vector<std::vector<TokenId>>& prompts, std::size_t max_new,
                                              std::optional<TokenId> stop, Step&& step) {
  const std::size_t rows = prompts.size();
  std::vector<std::vector<TokenId>> out(rows);
  if (rows == 0 || max_new == 0) return out;
  const std::size_t len = prompts.front().size();
  if (len == 0) throw ContractError("greedy decoding needs non-empty prompts");
  std::vector<TokenId> fresh;
  fresh.reserve(rows * len);
  for (const auto& p : prompts) {
    if (p.size() != len) throw DimensionError("greedy_batch prompts must share one length");
    fresh.insert(fresh.end(), p.begin(), p.end());
  }
  std::vector<bool> done(rows, false);
  std::size_t n = len;
  for (std::size_t t = 0; t < max_new; ++t) {
    // the last token of each row seeds the next step
    std::vector<TokenId> last(rows);
    for (std::size_t r = 0; r < rows; ++r) last[r] = fresh[r * n + n - 1];
    const auto picks = step(fresh, n, last);
    bool all_done = true;
    for (std::size_t r = 0; r < rows; ++r) {
      if (!done[r]) {
        out[r].push_back(picks[r]);
        if (stop && picks[r] == *stop) done[r] = true;
      }
      all_done = all_done && done[r];
    }
    if (all_done) break;
    fresh = picks;
    n = 1;
  }
  return out;
}

template <typename T>
std::vector<TokenId> argmax_rows(const Tensor<T>& logits, std::size_t rows, std::size_t stride_rows,
                                 std::size_t offset, std::size_t v) {
  std::vector<TokenId> out(rows);
  const T* d = logits.values().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = d + (r * stride_rows + offset) * v;
    std::size_t best = 0;
    for (std::size_t i = 1; i < v; ++i) {
      if (row[i] > row[best]) best = i;
    }
    out[r] = TokenId(best);
  }
  return out;
}

}  // namespace

template <typename T>
std::vector<std::vector<TokenId>> greedy_batch(const model::GptModel<T>& model,
                                               const std::vector<std::vector<TokenId>>& prompts,
                                               std::size_t max_new, std::optional<TokenId> stop) {
  numerics::NoGradGuard guard;
  model::EncoderCache<T> cache;
  const std::size_t v = model.config().vocab_size;
  const std::size_t dim = model.config().dim;
  return greedy_loop(prompts, max_new, stop, [&](const std::vector<TokenId>& fresh, std::size_t n,
                                                 const std::vector<TokenId>&) {
    const std::size_t rows = fresh.size() / n;
    auto h = model.encoder().extend(cache, fresh, rows, n);
    auto last = numerics::reshape(numerics::narrow(h, 1, n - 1, 1), {rows, dim});
    return argmax_rows(lm_head(last, model.table()), rows, 1, 0, v);
  });
}

template <typename T>
std::vector<std::vector<TokenId>> greedy_batch(const model::FtpModel<T>& model,
                                               const std::vector<std::vector<TokenId>>& prompts,
                                               std::size_t max_new, std::optional<TokenId> stop) {
  numerics::NoGradGuard guard;
  model::EncoderCache<T> cache;
  const std::size_t v = model.config().vocab_size;
  const std::size_t dim = model.config().dim;
  return greedy_loop(prompts, max_new, stop, [&](const std::vector<TokenId>& fresh, std::size_t n,
                                                 const std::vector<TokenId>& seeds) {
    const std::size_t rows = fresh.size() / n;
    auto h = model.encoder().extend(cache, fresh, rows, n);
    auto last = numerics::reshape(numerics::narrow(h, 1, n - 1, 1), {rows, dim});
    return argmax_rows(ftp_first_logits(model, last, seeds), rows, 1, 0, v);
  });
}

#define FTP_INSTANTIATE(T)                                                                                   \
  template std::vector<double> next_logits_gpt(const model::GptModel<T>&, std::span<const TokenId>);        \
  template std::vector<double> next_logits_ftp(const model::FtpModel<T>&, std::span<const TokenId>);        \
  template class ContextEncoder<T>;                                                                          \
  template class FtpDecoderOracle<T>;                                                                        \
  template std::vector<TokenId> generate(const model::GptModel<T>&, std::span<const TokenId>, std::size_t,  \
                                         const SamplerConfig&, std::mt19937_64&);                            \
  template std::vector<TokenId> generate(const model::FtpModel<T>&, std::span<const TokenId>, std::size_t,  \
                                         Strategy, const SamplerConfig&, std::mt19937_64&);                  \
  template std::vector<std::vector<TokenId>> greedy_batch(const model::GptModel<T>&,                        \
                                                          const std::vector<std::vector<TokenId>>&,         \
                                                          std::size_t, std::optional<TokenId>);              \
  template std::vector<std::vector<TokenId>> greedy_batch(const model::FtpModel<T>&,                        \
                                                          const std::vector<std::vector<TokenId>>&,         \
                                                          std::size_t, std::optional<TokenId>);

FTP_INSTANTIATE(float)
FTP_INSTANTIATE(double)
#undef FTP_INSTANTIATE

}  // namespace ftp::inference

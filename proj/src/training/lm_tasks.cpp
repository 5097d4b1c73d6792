#include "ftp/training/lm_tasks.hpp"

#include <memory>
#include <sstream>

#include "ftp/core/errors.hpp"

namespace ftp::training {

namespace {

// Batch stream plus dropout generator, checkpointed together.
struct StreamState {
  data::BatchStream stream;
  std::mt19937_64 dropout_rng;

  std::string save() const {
    std::ostringstream os;
    os << stream.rng_state() << '\n' << dropout_rng;
    return os.str();
  }
  void load(const std::string& text) {
    const auto split = text.find('\n');
    if (split == std::string::npos) throw FormatError("malformed data stream state", 0);
    stream.set_rng_state(text.substr(0, split));
    std::istringstream is(text.substr(split + 1));
    is >> dropout_rng;
  }
};

std::vector<data::Batch> validation_batches(const data::TokenCorpus* validation, const LmTaskOptions& o,
                                            std::size_t n_future) {
  std::vector<data::Batch> out;
  if (!validation) return out;
  data::BatchStream s(*validation, o.batch_size, o.len, n_future, data::derive_seed(o.seed, 1000));
  for (std::size_t i = 0; i < o.eval_batches; ++i) out.push_back(s.next());
  return out;
}

std::vector<TokenId> first_targets(const data::Batch& b) {
  std::vector<TokenId> t(b.batch * b.len);
  for (std::size_t r = 0; r < t.size(); ++r) t[r] = b.dec_target[r * b.n_future];
  return t;
}

std::vector<std::uint8_t> first_mask(const data::Batch& b) {
  std::vector<std::uint8_t> m(b.batch * b.len);
  for (std::size_t r = 0; r < m.size(); ++r) m[r] = b.loss_mask[r * b.n_future];
  return m;
}

template <typename T, typename LossFn>
TrainingTask<T> make_task(std::vector<model::NamedParameter<T>> params, const model::ModelConfig& config,
                          const data::TokenCorpus& train, const data::TokenCorpus* validation,
                          const LmTaskOptions& options, std::size_t n_future, LossFn loss_fn,
                          const std::string& kind) {
  auto state = std::make_shared<StreamState>(StreamState{
      data::BatchStream(train, options.batch_size, options.len, n_future, data::derive_seed(options.seed, 0)),
      std::mt19937_64(data::derive_seed(options.seed, 2))});
  auto val = std::make_shared<std::vector<data::Batch>>(validation_batches(validation, options, n_future));
  const double rate = config.dropout;
  TrainingTask<T> task;
  task.params = std::move(params);
  task.next_loss = [state, loss_fn, rate]() {
    model::DropoutContext drop{rate, rate > 0.0 ? &state->dropout_rng : nullptr};
    return loss_fn(state->stream.next(), drop);
  };
  if (!val->empty()) {
    task.evaluate = [val, loss_fn]() {
      EvalResult r;
      for (const auto& b : *val) {
        auto lv = loss_fn(b, model::DropoutContext{});
        r.loss += double(lv.loss.item());
        r.loss_k0 += lv.loss_k0;
      }
      r.loss /= double(val->size());
      r.loss_k0 /= double(val->size());
      return r;
    };
  }
  task.data_state = [state]() { return state->save(); };
  task.set_data_state = [state](const std::string& s) { state->load(s); };
  task.config = config_to_map(config);
  task.config["model.kind"] = kind;
  task.config["model.dtype"] = numerics::dtype_of<T>() == numerics::DType::f32 ? "f32" : "f64";
  return task;
}

}  // namespace

template <typename T>
LossValue<T> gpt_batch_loss(const model::GptModel<T>& model, const data::Batch& batch,
                            const model::DropoutContext& drop) {
  auto logits = model.forward(batch.enc_tokens, batch.batch, batch.len, drop);
  LossValue<T> out;
  out.loss = gpt_loss(logits, first_targets(batch), first_mask(batch));
  out.loss_k0 = double(out.loss.item());
  return out;
}

template <typename T>
LossValue<T> ftp_batch_loss(const model::FtpModel<T>& model, const data::Batch& batch,
                            const model::DropoutContext& drop) {
  auto logits = model.forward(batch.enc_tokens, batch.batch, batch.len, batch.dec_in, drop);
  return ftp_loss(logits, batch.dec_target, batch.loss_mask, model.config().gamma);
}

template <typename T>
TrainingTask<T> make_gpt_lm_task(const model::GptModel<T>& model, const data::TokenCorpus& train,
                                 const data::TokenCorpus* validation, const LmTaskOptions& options) {
  auto fn = [&model](const data::Batch& b, const model::DropoutContext& d) { return gpt_batch_loss(model, b, d); };
  return make_task<T>(model.named_parameters(), model.config(), train, validation, options, 1, fn, "gpt");
}

template <typename T>
TrainingTask<T> make_ftp_lm_task(const model::FtpModel<T>& model, const data::TokenCorpus& train,
                                 const data::TokenCorpus* validation, const LmTaskOptions& options) {
  auto fn = [&model](const data::Batch& b, const model::DropoutContext& d) { return ftp_batch_loss(model, b, d); };
  return make_task<T>(model.named_parameters(), model.config(), train, validation, options,
                      model.config().n_future, fn, "ftp");
}

#define FTP_INSTANTIATE(T)                                                                                    \
  template LossValue<T> gpt_batch_loss(const model::GptModel<T>&, const data::Batch&,                       \
                                       const model::DropoutContext&);                                       \
  template LossValue<T> ftp_batch_loss(const model::FtpModel<T>&, const data::Batch&,                       \
                                       const model::DropoutContext&);                                       \
  template TrainingTask<T> make_gpt_lm_task(const model::GptModel<T>&, const data::TokenCorpus&,            \
                                            const data::TokenCorpus*, const LmTaskOptions&);                \
  template TrainingTask<T> make_ftp_lm_task(const model::FtpModel<T>&, const data::TokenCorpus&,            \
                                            const data::TokenCorpus*, const LmTaskOptions&);

FTP_INSTANTIATE(float)
FTP_INSTANTIATE(double)
#undef FTP_INSTANTIATE

}  // namespace ftp::training

#include "ftp/gridworld/grid_tasks.hpp"

#include <algorithm>
#include <memory>
#include <numeric>
#include <sstream>

#include "ftp/core/errors.hpp"
#include "ftp/gridworld/codec.hpp"
#include "ftp/training/lm_tasks.hpp"

namespace ftp::gridworld {

using training::EvalResult;
using training::LossValue;
using training::TrainingTask;

LossRegion parse_loss_region(const std::string& name) {
  if (name == "all") return LossRegion::all;
  if (name == "program") return LossRegion::program;
  throw ConfigError("unknown loss region '" + name + "' (expected all or program)");
}

std::string to_string(LossRegion r) { return r == LossRegion::all ? "all" : "program"; }

data::Batch grid_batch(const std::vector<GridInstance>& instances, std::span<const std::size_t> picks,
                       std::size_t n_future, LossRegion region) {
  if (picks.empty()) throw ContractError("grid_batch needs at least one instance");
  std::size_t len = 0;
  for (auto i : picks) len = std::max(len, kGridRegion + instances.at(i).program.size());
  // encoder positions 0..len-1 predict up to the EOS at position len
  std::vector<std::vector<TokenId>> windows;
  windows.reserve(picks.size());
  for (auto i : picks) {
    auto ids = encode_instance(instances[i]);
    ids.resize(len + n_future, tok::kPad);
    windows.push_back(std::move(ids));
  }
  auto b = data::make_batch(windows, n_future, tok::kPad);
  if (region == LossRegion::program) {
    for (std::size_t r = 0; r < b.batch; ++r) {
      for (std::size_t t = 0; t < b.len; ++t) {
        for (std::size_t k = 0; k < n_future; ++k) {
          if (t + k + 1 < kGridRegion) b.loss_mask[b.index(r, t, k)] = 0;
        }
      }
    }
  }
  return b;
}

std::size_t steps_per_epoch(std::size_t n, std::size_t batch_size) {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  return (n + batch_size - 1) / batch_size;
}

namespace {

// Epoch-shuffled instance order. The permutation of epoch e is derived from
// the seed, so (epoch, cursor) is the whole state.
class EpochStream {
 public:
  EpochStream(std::size_t n, std::size_t batch, std::uint64_t seed) : n_(n), batch_(batch), seed_(seed) {
    if (n == 0) throw ContractError("training set is empty");
    reorder();
  }

  std::vector<std::size_t> next() {
    std::vector<std::size_t> picks;
    picks.reserve(batch_);
    while (picks.size() < batch_) {
      if (cursor_ == n_) {
        ++epoch_;
        cursor_ = 0;
        reorder();
      }
      picks.push_back(order_[cursor_++]);
    }
    return picks;
  }

  std::string save() const { return std::to_string(epoch_) + " " + std::to_string(cursor_); }
  void load(const std::string& s) {
    std::istringstream is(s);
    std::uint64_t e = 0;
    std::size_t c = 0;
    if (!(is >> e >> c) || c > n_) throw FormatError("malformed grid stream state '" + s + "'", 0);
    epoch_ = e;
    cursor_ = c;
    reorder();
  }

 private:
  void reorder() {
    order_.resize(n_);
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::mt19937_64 rng(data::derive_seed(seed_, epoch_));
    std::shuffle(order_.begin(), order_.end(), rng);
  }

  std::size_t n_, batch_;
  std::uint64_t seed_;
  std::uint64_t epoch_ = 0;
  std::size_t cursor_ = 0;
  std::vector<std::size_t> order_;
};

struct GridState {
  EpochStream stream;
  std::mt19937_64 dropout_rng;
};

template <typename T>
LossValue<T> ftp_grid_loss(const model::FtpModel<T>& model, const data::Batch& b, const model::DropoutContext& drop) {
  const std::size_t n = b.n_future;
  std::vector<std::size_t> rows;
  std::vector<TokenId> dec_in, targets;
  std::vector<std::uint8_t> mask;
  for (std::size_t r = 0; r < b.batch * b.len; ++r) {
    const auto m = std::span(b.loss_mask).subspan(r * n, n);
    if (std::none_of(m.begin(), m.end(), [](std::uint8_t v) { return v != 0; })) continue;
    rows.push_back(r);
    dec_in.insert(dec_in.end(), b.dec_in.begin() + std::ptrdiff_t(r * n), b.dec_in.begin() + std::ptrdiff_t(r * n + n));
    targets.insert(targets.end(), b.dec_target.begin() + std::ptrdiff_t(r * n),
                   b.dec_target.begin() + std::ptrdiff_t(r * n + n));
    mask.insert(mask.end(), m.begin(), m.end());
  }
  auto logits = model.forward_rows(b.enc_tokens, b.batch, b.len, rows, dec_in, n, drop);
  return training::ftp_loss(logits, targets, mask, model.config().gamma);
}

template <typename T, typename LossFn>
TrainingTask<T> make_task(std::vector<model::NamedParameter<T>> params, const model::ModelConfig& config,
                          const std::vector<GridInstance>& train, const std::vector<GridInstance>* test,
                          const GridTaskOptions& options, std::size_t n_future, LossFn loss_fn,
                          const std::string& kind) {
  if (config.enc_ctx < kGridRegion + std::size_t(kMaxProgramLength)) {
    throw ConfigError("gridworld training needs enc_ctx >= 650, got " + std::to_string(config.enc_ctx));
  }
  if (config.vocab_size != tok::kVocabSize) {
    throw ConfigError("gridworld models need vocab_size 63, got " + std::to_string(config.vocab_size));
  }
  auto state = std::make_shared<GridState>(GridState{
      EpochStream(train.size(), options.batch_size, data::derive_seed(options.seed, 0)),
      std::mt19937_64(data::derive_seed(options.seed, 2))});
  const double rate = config.dropout;
  const LossRegion region = options.loss_region;
  TrainingTask<T> task;
  task.params = std::move(params);
  task.next_loss = [state, &train, loss_fn, rate, region, n_future]() {
    model::DropoutContext drop{rate, rate > 0.0 ? &state->dropout_rng : nullptr};
    const auto picks = state->stream.next();
    return loss_fn(grid_batch(train, picks, n_future, region), drop);
  };
  if (test && !test->empty() && options.eval_instances > 0) {
    const std::size_t n_eval = std::min(options.eval_instances, test->size());
    const std::size_t bs = options.batch_size;
    task.evaluate = [test, n_eval, bs, loss_fn, region, n_future]() {
      EvalResult r;
      std::size_t batches = 0;
      for (std::size_t s = 0; s < n_eval; s += bs) {
        std::vector<std::size_t> picks(std::min(bs, n_eval - s));
        std::iota(picks.begin(), picks.end(), s);
        auto lv = loss_fn(grid_batch(*test, picks, n_future, region), model::DropoutContext{});
        r.loss += double(lv.loss.item());
        r.loss_k0 += lv.loss_k0;
        ++batches;
      }
      r.loss /= double(batches);
      r.loss_k0 /= double(batches);
      return r;
    };
  }
  task.data_state = [state]() {
    std::ostringstream os;
    os << state->stream.save() << '\n' << state->dropout_rng;
    return os.str();
  };
  task.set_data_state = [state](const std::string& s) {
    const auto split = s.find('\n');
    if (split == std::string::npos) throw FormatError("malformed grid stream state", 0);
    state->stream.load(s.substr(0, split));
    std::istringstream is(s.substr(split + 1));
    is >> state->dropout_rng;
  };
  task.config = training::config_to_map(config);
  task.config["model.kind"] = kind;
  task.config["model.dtype"] = numerics::dtype_of<T>() == numerics::DType::f32 ? "f32" : "f64";
  task.config["grid.loss_region"] = to_string(region);
  return task;
}

}  // namespace

template <typename T>
TrainingTask<T> make_gpt_grid_task(const model::GptModel<T>& model, const std::vector<GridInstance>& train,
                                   const std::vector<GridInstance>* test, const GridTaskOptions& options) {
  auto fn = [&model](const data::Batch& b, const model::DropoutContext& d) {
    return training::gpt_batch_loss(model, b, d);
  };
  return make_task<T>(model.named_parameters(), model.config(), train, test, options, 1, fn, "gpt");
}

template <typename T>
TrainingTask<T> make_ftp_grid_task(const model::FtpModel<T>& model, const std::vector<GridInstance>& train,
                                   const std::vector<GridInstance>* test, const GridTaskOptions& options) {
  auto fn = [&model](const data::Batch& b, const model::DropoutContext& d) { return ftp_grid_loss(model, b, d); };
  return make_task<T>(model.named_parameters(), model.config(), train, test, options, model.config().n_future, fn,
                      "ftp");
}

#define FTP_INSTANTIATE(T)                                                                                    \
  template TrainingTask<T> make_gpt_grid_task(const model::GptModel<T>&, const std::vector<GridInstance>&,  \
                                              const std::vector<GridInstance>*, const GridTaskOptions&);    \
  template TrainingTask<T> make_ftp_grid_task(const model::FtpModel<T>&, const std::vector<GridInstance>&,  \
                                              const std::vector<GridInstance>*, const GridTaskOptions&);

FTP_INSTANTIATE(float)
FTP_INSTANTIATE(double)
#undef FTP_INSTANTIATE

}  // namespace ftp::gridworld

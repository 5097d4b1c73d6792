#include "ftp/training/trainer.hpp"

#include <cmath>
#include <fmt/format.h>

#include "ftp/core/errors.hpp"

namespace ftp::training {

namespace fs = std::filesystem;

MetricsLog::MetricsLog(const fs::path& path) {
  const bool fresh = !fs::exists(path) || fs::file_size(path) == 0;
  out_.open(path, std::ios::app);
  if (!out_) throw std::runtime_error("cannot open metrics file " + path.string());
  if (fresh) out_ << kHeader << '\n';
}

void MetricsLog::write(const MetricRow& row) {
  rows_.push_back(row);
  if (out_.is_open()) {
    out_ << fmt::format("{},{},{:.9g},{:.9g},{:.9g},{:.3f}\n", row.step, row.split, row.loss, row.loss_k0, row.lr,
                        row.wallclock);
    out_.flush();
  }
}

template <typename T>
Trainer<T>::Trainer(TrainingTask<T> task, TrainConfig config)
    : task_(std::move(task)), config_(config), start_(std::chrono::steady_clock::now()) {
  config_.validate();
  if (!task_.next_loss) throw ConfigError("training task has no loss function");
  adam_ = make_adam_state(task_.params);
}

template <typename T>
void Trainer<T>::emit(const MetricRow& row) {
  if (metrics_) metrics_->write(row);
  if (on_row_) on_row_(row);
}

template <typename T>
MetricRow Trainer<T>::train_step() {
  zero_grads(task_.params);
  const std::size_t acc = config_.accumulation;
  double loss_sum = 0.0, k0_sum = 0.0;
  for (std::size_t a = 0; a < acc; ++a) {
    auto lv = task_.next_loss();
    const double value = double(lv.loss.item());
    if (!std::isfinite(value)) {
      throw TrainingError(fmt::format("non-finite loss {} at step {} (micro-batch {})", value, step_ + 1, a));
    }
    numerics::scale(lv.loss, static_cast<T>(1.0 / double(acc))).backward();
    loss_sum += value;
    k0_sum += lv.loss_k0;
  }
  for (const auto& p : task_.params) {
    for (T g : p.tensor.grad()) {
      if (!std::isfinite(double(g))) {
        throw TrainingError(fmt::format("non-finite gradient in {} at step {}", p.name, step_ + 1));
      }
    }
  }
  clip_grad_norm(task_.params, config_.grad_clip);
  const double lr = lr_at(step_ + 1, config_);
  adamw_step(task_.params, adam_, lr, config_);
  ++step_;
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  return {step_, "train", loss_sum / double(acc), k0_sum / double(acc), lr, elapsed};
}

template <typename T>
EvalResult Trainer<T>::evaluate() const {
  if (!task_.evaluate) throw ConfigError("training task has no validation function");
  numerics::NoGradGuard guard;
  return task_.evaluate();
}

template <typename T>
void Trainer<T>::run(std::uint64_t until) {
  until = std::min(until, config_.total_steps);
  while (step_ < until) {
    emit(train_step());
    if (config_.eval_interval && task_.evaluate && step_ % config_.eval_interval == 0) {
      const auto ev = evaluate();
      const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
      emit({step_, "val", ev.loss, ev.loss_k0, lr_at(step_, config_), elapsed});
    }
    if (config_.checkpoint_interval && checkpoint_path_ && step_ % config_.checkpoint_interval == 0) {
      save_checkpoint(*checkpoint_path_, snapshot());
    }
  }
}

template <typename T>
Checkpoint Trainer<T>::snapshot() const {
  return make_checkpoint<T>(task_.config, task_.params, &adam_, step_,
                            task_.data_state ? task_.data_state() : std::string());
}

template <typename T>
void Trainer<T>::resume(const Checkpoint& checkpoint) {
  restore_checkpoint<T>(checkpoint, task_.params, &adam_);
  step_ = checkpoint.step;
  if (task_.set_data_state) task_.set_data_state(checkpoint.rng_state);
}

template class Trainer<float>;
template class Trainer<double>;

}  // namespace ftp::training

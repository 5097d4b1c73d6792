#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ftp/training/checkpoint.hpp"
#include "ftp/training/loss.hpp"
#include "ftp/training/optimizer.hpp"

namespace ftp::training {

struct MetricRow {
  std::uint64_t step = 0;
  std::string split;  // "train" or "val"
  double loss = 0.0;
  double loss_k0 = 0.0;
  double lr = 0.0;
  double wallclock = 0.0;  // seconds since the run started
};

// Append-only CSV with header step,split,loss,loss_k0,lr,wallclock.
class MetricsLog {
 public:
  static constexpr const char* kHeader = "step,split,loss,loss_k0,lr,wallclock";

  MetricsLog() = default;
  // Appends to an existing file, writing the header only for a new one.
  explicit MetricsLog(const std::filesystem::path& path);

  void write(const MetricRow& row);
  const std::vector<MetricRow>& rows() const { return rows_; }

 private:
  std::ofstream out_;
  std::vector<MetricRow> rows_;
};

struct EvalResult {
  double loss = 0.0;
  double loss_k0 = 0.0;
};

// Everything the loop needs from a concrete objective. next_loss draws the
// next micro-batch from a stream owned by the task; data_state /
// set_data_state capture that stream (and any dropout RNG) for checkpoints.
template <typename T>
struct TrainingTask {
  std::vector<model::NamedParameter<T>> params;
  std::function<LossValue<T>()> next_loss;
  std::function<EvalResult()> evaluate;  // optional
  std::function<std::string()> data_state;
  std::function<void(const std::string&)> set_data_state;
  std::map<std::string, std::string> config;  // stored in checkpoints
};

template <typename T>
class Trainer {
 public:
  Trainer(TrainingTask<T> task, TrainConfig config);

  void set_metrics(MetricsLog* log) { metrics_ = log; }
  void set_checkpoint_path(std::filesystem::path path) { checkpoint_path_ = std::move(path); }
  void set_row_callback(std::function<void(const MetricRow&)> cb) { on_row_ = std::move(cb); }

  // Runs optimizer steps until step() == min(until, total_steps). Throws
  // TrainingError on a non-finite loss or gradient.
  void run(std::uint64_t until);
  void run() { run(config_.total_steps); }

  // Single optimizer step; returns the training row.
  MetricRow train_step();
  EvalResult evaluate() const;

  Checkpoint snapshot() const;
  void resume(const Checkpoint& checkpoint);

  std::uint64_t step() const { return step_; }
  const TrainConfig& config() const { return config_; }
  const AdamState<T>& optimizer() const { return adam_; }

 private:
  void emit(const MetricRow& row);

  TrainingTask<T> task_;
  TrainConfig config_;
  AdamState<T> adam_;
  std::uint64_t step_ = 0;
  MetricsLog* metrics_ = nullptr;
  std::optional<std::filesystem::path> checkpoint_path_;
  std::function<void(const MetricRow&)> on_row_;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace ftp::training

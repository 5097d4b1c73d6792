#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ftp/data/corpus.hpp"
#include "ftp/gridworld/world.hpp"
#include "ftp/model/models.hpp"
#include "ftp/training/trainer.hpp"

namespace ftp::gridworld {

// Targets that contribute to the loss. `all` keeps every target up to and
// including EOS; `program` keeps only program and EOS targets.
enum class LossRegion { all, program };

LossRegion parse_loss_region(const std::string& name);
std::string to_string(LossRegion r);

struct GridTaskOptions {
  std::size_t batch_size = 8;
  LossRegion loss_region = LossRegion::all;
  std::size_t eval_instances = 64;  // leading test instances used for validation loss
  std::uint64_t seed = 1;
};

// Aligned batch of encoded instances, trimmed to the longest EOS position
// and masked per the loss region (PAD targets are always masked).
data::Batch grid_batch(const std::vector<GridInstance>& instances, std::span<const std::size_t> picks,
                       std::size_t n_future, LossRegion region);

// Steps per pass over `n` instances.
std::size_t steps_per_epoch(std::size_t n, std::size_t batch_size);

// Instances are visited in a fresh permutation each epoch. The task keeps a
// reference to `train` and `test`.
template <typename T>
training::TrainingTask<T> make_gpt_grid_task(const model::GptModel<T>& model, const std::vector<GridInstance>& train,
                                             const std::vector<GridInstance>* test, const GridTaskOptions& options);

// The decoder runs only on positions with at least one active target.
template <typename T>
training::TrainingTask<T> make_ftp_grid_task(const model::FtpModel<T>& model, const std::vector<GridInstance>& train,
                                             const std::vector<GridInstance>* test, const GridTaskOptions& options);

}  // namespace ftp::gridworld

#pragma once

#include <cstdint>
#include <vector>

#include "ftp/model/models.hpp"

namespace ftp::training {

struct TrainConfig {
  double lr_max = 4e-4;
  double lr_min = 0.0;
  std::uint64_t warmup_steps = 100;
  std::uint64_t total_steps = 1000;
  double weight_decay = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  std::size_t accumulation = 1;
  double grad_clip = 1.0;  // global norm; 0 disables
  std::uint64_t seed = 1;
  std::size_t batch_size = 8;
  std::uint64_t eval_interval = 0;  // 0 disables periodic validation
  std::uint64_t checkpoint_interval = 0;

  // Throws ConfigError on violated constraints.
  void validate() const;
};

// Linear warmup lr_max * step / warmup, then cosine decay to lr_min at
// total_steps, constant lr_min afterwards.
double lr_at(std::uint64_t step, const TrainConfig& config);

template <typename T>
struct AdamState {
  std::vector<std::vector<T>> m, v;
  std::uint64_t t = 0;
};

template <typename T>
AdamState<T> make_adam_state(const std::vector<model::NamedParameter<T>>& params);

// One AdamW update with decoupled weight decay p <- p * (1 - lr * wd) on
// parameters flagged for decay. Missing gradients count as zero. Throws
// ContractError when the state does not match the parameter shapes.
template <typename T>
void adamw_step(const std::vector<model::NamedParameter<T>>& params, AdamState<T>& state, double lr,
                const TrainConfig& config);

// Scales gradients so that their global L2 norm is at most max_norm.
// Returns the norm before clipping.
template <typename T>
double clip_grad_norm(const std::vector<model::NamedParameter<T>>& params, double max_norm);

template <typename T>
void zero_grads(const std::vector<model::NamedParameter<T>>& params);

}  // namespace ftp::training

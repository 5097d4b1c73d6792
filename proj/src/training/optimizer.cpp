#include "ftp/training/optimizer.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "ftp/core/errors.hpp"

namespace ftp::training {

void TrainConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("invalid training config: " + what);
  };
  require(lr_max > 0.0, "lr_max must be positive");
  require(lr_min >= 0.0 && lr_min <= lr_max, "lr_min must be in [0, lr_max]");
  require(warmup_steps <= total_steps, "warmup_steps exceeds total_steps");
  require(total_steps >= 1, "total_steps must be positive");
  require(weight_decay >= 0.0, "weight_decay must be non-negative");
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "betas must be in [0, 1)");
  require(eps > 0.0, "eps must be positive");
  require(accumulation >= 1, "accumulation must be at least 1");
  require(grad_clip >= 0.0, "grad_clip must be non-negative");
  require(batch_size >= 1, "batch_size must be positive");
}

double lr_at(std::uint64_t step, const TrainConfig& c) {
  if (step < c.warmup_steps) return c.lr_max * double(step) / double(c.warmup_steps);
  if (step >= c.total_steps) return c.lr_min;
  const double span = double(c.total_steps - c.warmup_steps);
  const double progress = double(step - c.warmup_steps) / span;
  return c.lr_min + 0.5 * (c.lr_max - c.lr_min) * (1.0 + std::cos(std::numbers::pi * progress));
}

template <typename T>
AdamState<T> make_adam_state(const std::vector<model::NamedParameter<T>>& params) {
  AdamState<T> s;
  for (const auto& p : params) {
    s.m.emplace_back(p.tensor.numel(), T{0});
    s.v.emplace_back(p.tensor.numel(), T{0});
  }
  return s;
}

template <typename T>
void adamw_step(const std::vector<model::NamedParameter<T>>& params, AdamState<T>& state, double lr,
                const TrainConfig& config) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ContractError("optimizer state tracks " + std::to_string(state.m.size()) + " tensors, model has " +
                        std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.m[i].size() != params[i].tensor.numel() || state.v[i].size() != params[i].tensor.numel()) {
      throw ContractError("optimizer state shape mismatch for " + params[i].name);
    }
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(config.beta1, double(state.t));
  const double bc2 = 1.0 - std::pow(config.beta2, double(state.t));
  const T b1 = T(config.beta1), b2 = T(config.beta2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    numerics::Tensor<T> handle = params[i].tensor;
    auto p = handle.mutable_values();
    std::span<const T> g;
    if (handle.has_grad()) g = handle.grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    const T decay = params[i].decay ? T(1.0 - lr * config.weight_decay) : T{1};
    for (std::size_t j = 0; j < p.size(); ++j) {
      const T gj = g.empty() ? T{0} : g[j];
      m[j] = b1 * m[j] + (T{1} - b1) * gj;
      v[j] = b2 * v[j] + (T{1} - b2) * gj * gj;
      const double mhat = double(m[j]) / bc1;
      const double vhat = double(v[j]) / bc2;
      p[j] = T(double(p[j] * decay) - lr * mhat / (std::sqrt(vhat) + config.eps));
    }
  }
}

template <typename T>
double clip_grad_norm(const std::vector<model::NamedParameter<T>>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    if (!p.tensor.has_grad()) continue;
    for (T g : p.tensor.grad()) sq += double(g) * double(g);
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const T factor = T(max_norm / (norm + 1e-6));
    for (const auto& p : params) {
      numerics::Tensor<T> handle = p.tensor;
      if (!handle.has_grad()) continue;
      for (T& g : handle.mutable_grad()) g *= factor;
    }
  }
  return norm;
}

template <typename T>
void zero_grads(const std::vector<model::NamedParameter<T>>& params) {
  for (const auto& p : params) {
    numerics::Tensor<T> handle = p.tensor;
    handle.zero_grad();
  }
}

#define FTP_INSTANTIATE(T)                                                                                     \
  template AdamState<T> make_adam_state(const std::vector<model::NamedParameter<T>>&);                       \
  template void adamw_step(const std::vector<model::NamedParameter<T>>&, AdamState<T>&, double,              \
                           const TrainConfig&);                                                              \
  template double clip_grad_norm(const std::vector<model::NamedParameter<T>>&, double);                      \
  template void zero_grads(const std::vector<model::NamedParameter<T>>&);

FTP_INSTANTIATE(float)
FTP_INSTANTIATE(double)
#undef FTP_INSTANTIATE

}  // namespace ftp::training

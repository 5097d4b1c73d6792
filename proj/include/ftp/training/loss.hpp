#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ftp/numerics/ops.hpp"

namespace ftp::training {

using numerics::Tensor;
using numerics::TokenId;

// Loss weights gamma^k for k = 0..n-1.
std::vector<double> future_weights(double gamma, std::size_t n);

template <typename T>
struct LossValue {
  Tensor<T> loss;        // differentiable objective
  double loss_k0 = 0.0;  // unweighted mean cross entropy of the first token ahead
};

// logits [.., N, V]; targets and mask hold one entry per (.., k) row. The
// loss is sum(mask * gamma^k * CE) / sum(mask * gamma^k). Throws
// ContractError for an all-zero mask and ConfigError for gamma outside (0, 1].
template <typename T>
LossValue<T> ftp_loss(const Tensor<T>& logits, std::span<const TokenId> targets, std::span<const std::uint8_t> mask,
                      double gamma);

// Masked mean next-token cross entropy for logits [.., V].
template <typename T>
Tensor<T> gpt_loss(const Tensor<T>& logits, std::span<const TokenId> targets, std::span<const std::uint8_t> mask);

}  // namespace ftp::training

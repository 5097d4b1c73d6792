#include "ftp/training/loss.hpp"

#include <cmath>
#include <string>

#include "ftp/core/errors.hpp"

namespace ftp::training {

using namespace numerics;

std::vector<double> future_weights(double gamma, std::size_t n) {
  std::vector<double> w(n);
  double g = 1.0;
  for (std::size_t k = 0; k < n; ++k, g *= gamma) w[k] = g;
  return w;
}

namespace {

void check_sizes(std::size_t rows, std::size_t targets, std::size_t mask, const char* what) {
  if (targets != rows || mask != rows) {
    throw DimensionError(std::string(what) + ": " + std::to_string(rows) + " logit rows but " +
                         std::to_string(targets) + " targets and " + std::to_string(mask) + " mask entries");
  }
}

std::vector<TokenId> masked_targets(std::span<const TokenId> targets, std::span<const std::uint8_t> mask) {
  std::vector<TokenId> out(targets.begin(), targets.end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!mask[i]) out[i] = kIgnoreIndex;
  }
  return out;
}

}  // namespace

template <typename T>
LossValue<T> ftp_loss(const Tensor<T>& logits, std::span<const TokenId> targets, std::span<const std::uint8_t> mask,
                      double gamma) {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must be in (0, 1], got " + std::to_string(gamma));
  if (logits.rank() < 2) throw DimensionError("ftp_loss expects logits [.., N, V], got " + shape_str(logits.shape()));
  const std::size_t n = logits.shape()[logits.rank() - 2];
  const std::size_t rows = logits.numel() / logits.shape().back();
  check_sizes(rows, targets.size(), mask.size(), "ftp_loss");
  const auto gk = future_weights(gamma, n);
  double total = 0.0;
  std::size_t first_count = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (!mask[r]) continue;
    total += gk[r % n];
    first_count += r % n == 0;
  }
  if (total == 0.0) throw ContractError("ftp_loss: loss mask is all zero");
  std::vector<T> weights(rows, T{0});
  for (std::size_t r = 0; r < rows; ++r) {
    if (mask[r]) weights[r] = static_cast<T>(gk[r % n] / total);
  }
  auto ce = cross_entropy_rows(logits, masked_targets(targets, mask));
  LossValue<T> out;
  out.loss = weighted_sum(ce, std::span<const T>(weights));
  double k0 = 0.0;
  for (std::size_t r = 0; r < rows; r += n) {
    if (mask[r]) k0 += double(ce.values()[r]);
  }
  out.loss_k0 = first_count ? k0 / double(first_count) : std::nan("");
  return out;
}

template <typename T>
Tensor<T> gpt_loss(const Tensor<T>& logits, std::span<const TokenId> targets, std::span<const std::uint8_t> mask) {
  const std::size_t rows = logits.numel() / logits.shape().back();
  check_sizes(rows, targets.size(), mask.size(), "gpt_loss");
  std::size_t active = 0;
  for (auto m : mask) active += m != 0;
  if (active == 0) throw ContractError("gpt_loss: loss mask is all zero");
  // same weighting arithmetic as ftp_loss so that N = 1 agrees exactly
  std::vector<T> weights(rows, T{0});
  for (std::size_t r = 0; r < rows; ++r) {
    if (mask[r]) weights[r] = static_cast<T>(1.0 / double(active));
  }
  return weighted_sum(cross_entropy_rows(logits, masked_targets(targets, mask)), std::span<const T>(weights));
}

template LossValue<float> ftp_loss(const Tensor<float>&, std::span<const TokenId>, std::span<const std::uint8_t>, double);
template LossValue<double> ftp_loss(const Tensor<double>&, std::span<const TokenId>, std::span<const std::uint8_t>,
                                    double);
template Tensor<float> gpt_loss(const Tensor<float>&, std::span<const TokenId>, std::span<const std::uint8_t>);
template Tensor<double> gpt_loss(const Tensor<double>&, std::span<const TokenId>, std::span<const std::uint8_t>);

}  // namespace ftp::training

#pragma once

#include <cstdint>

#include "ftp/data/corpus.hpp"
#include "ftp/model/models.hpp"
#include "ftp/training/trainer.hpp"

namespace ftp::training {

struct LmTaskOptions {
  std::size_t batch_size = 8;
  std::size_t len = 64;            // encoder tokens per window
  std::size_t eval_batches = 4;    // validation batches drawn with a fixed seed
  std::uint64_t seed = 1;
};

// Next-token objective on random corpus windows. Validation reports the
// same loss in both columns.
template <typename T>
TrainingTask<T> make_gpt_lm_task(const model::GptModel<T>& model, const data::TokenCorpus& train,
                                 const data::TokenCorpus* validation, const LmTaskOptions& options);

// Gamma-weighted future-token objective; loss_k0 tracks the first token.
template <typename T>
TrainingTask<T> make_ftp_lm_task(const model::FtpModel<T>& model, const data::TokenCorpus& train,
                                 const data::TokenCorpus* validation, const LmTaskOptions& options);

// Loss of one aligned batch.
template <typename T>
LossValue<T> gpt_batch_loss(const model::GptModel<T>& model, const data::Batch& batch,
                            const model::DropoutContext& drop = {});
template <typename T>
LossValue<T> ftp_batch_loss(const model::FtpModel<T>& model, const data::Batch& batch,
                            const model::DropoutContext& drop = {});

}  // namespace ftp::training

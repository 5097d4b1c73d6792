#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "ftp/data/corpus.hpp"
#include "ftp/model/models.hpp"
#include "ftp/training/optimizer.hpp"

namespace ftp::probes {

using numerics::Tensor;
using numerics::TokenId;

// Read-only access to top-layer embeddings. embed returns [len, dim] without
// recording gradients; len must not exceed max_len.
template <typename T>
struct EmbeddingSource {
  std::size_t dim = 0;
  std::size_t max_len = 0;
  std::function<Tensor<T>(std::span<const TokenId>)> embed;
};

template <typename T>
EmbeddingSource<T> model_embeddings(const model::GptModel<T>& model);
template <typename T>
EmbeddingSource<T> model_embeddings(const model::FtpModel<T>& model);

double cosine(std::span<const double> a, std::span<const double> b);

// ---------------------------------------------------------------- similarity

struct AdjacentSeries {
  std::vector<double> values;  // cosine(e_t, e_{t+1}); excluded pairs omitted
  std::size_t zero_norm_excluded = 0;
};

// Needs at least two tokens.
template <typename T>
AdjacentSeries adjacent_cosine_series(const EmbeddingSource<T>& source, std::span<const TokenId> tokens);

struct SeparationOptions {
  std::size_t max_sep = 250;
  std::size_t n_sequences = 16;
  std::size_t seq_len = 0;        // 0: source.max_len
  std::size_t far_pairs = 20000;  // cross-sequence pairs for the far-field baseline
  std::uint64_t seed = 1;
};

struct SimilarityStats {
  std::size_t max_sep = 0;
  std::vector<double> mean;        // index d - 1 for separation d
  std::vector<double> stddev;      // population standard deviation
  std::vector<std::size_t> count;
  double far_mean = 0.0;
  double far_stddev = 0.0;
  std::size_t far_count = 0;
  std::size_t zero_norm_excluded = 0;
  std::size_t seq_len = 0;
  std::vector<std::size_t> starts;  // sampled window offsets in the corpus

  // Header separation,mean,std,count; the far-field row uses separation "far".
  void write_csv(const std::filesystem::path& path) const;
};

// Mean / std of cosine(e_t, e_{t+d}) over all pairs inside each sampled
// window; far field from position pairs in two different windows.
template <typename T>
SimilarityStats separation_stats(const EmbeddingSource<T>& source, const data::TokenCorpus& corpus,
                                 const SeparationOptions& options);

// ---------------------------------------------------------------- features

// Frozen embeddings of sampled windows together with the tokens around each
// position: current[m] is the token at the embedded position and
// future[m * n_future + j] the token j + 1 places ahead.
template <typename T>
struct FeatureSet {
  Tensor<T> embeddings;  // [rows, dim]
  std::vector<TokenId> current;
  std::vector<TokenId> future;
  std::size_t n_future = 0;

  std::size_t rows() const { return current.size(); }
};

struct FeatureOptions {
  std::size_t n_windows = 16;
  std::size_t window_len = 0;  // embedded positions per window; 0: source.max_len
  std::size_t n_future = 5;
  std::uint64_t seed = 1;
};

template <typename T>
FeatureSet<T> extract_features(const EmbeddingSource<T>& source, const data::TokenCorpus& corpus,
                               const FeatureOptions& options);

// ---------------------------------------------------------------- probes

struct ProbeConfig {
  std::size_t offset = 1;     // k: predict the token k places ahead
  std::size_t expansion = 4;  // hidden width = expansion * dim
  std::size_t epochs = 4;
  double lr = 1e-3;
  double weight_decay = 0.0;
  std::size_t batch_size = 64;
  std::uint64_t seed = 1;

  void validate() const;
};

struct ProbeResult {
  double cross_entropy = 0.0;  // held-out mean
  double perplexity = 0.0;     // exp(cross_entropy)
};

// Two-layer MLP (dim -> expansion*dim, GELU, -> dim) followed by a frozen
// copy of the LM head `table` [vocab, dim]. Only the MLP trains.
template <typename T>
struct MlpProbe {
  Tensor<T> w1, b1, w2, b2;
  Tensor<T> head;  // frozen

  Tensor<T> logits(const Tensor<T>& e) const;
  std::vector<model::NamedParameter<T>> parameters() const;
};

template <typename T>
struct FutureProbe {
  MlpProbe<T> probe;
  ProbeResult heldout;
};

template <typename T>
FutureProbe<T> train_future_probe(const Tensor<T>& lm_table, const FeatureSet<T>& train, const FeatureSet<T>& heldout,
                                  const ProbeConfig& config);

struct OffsetPerplexity {
  std::vector<double> cross_entropy;  // index k - 1
  std::vector<double> perplexity;
};

// Teacher-forced per-offset held-out cross entropy of a decoder reading
// features: input [current, future_0 .. future_{N-2}], targets future_0..N-1.
template <typename T>
OffsetPerplexity decoder_offset_perplexity(const model::FtpDecoder<T>& decoder, const FeatureSet<T>& features,
                                           std::size_t batch_rows = 256);

template <typename T>
struct DecoderProbe {
  model::FtpDecoder<T> decoder;
  OffsetPerplexity heldout;
};

// Projection + decoder shaped by `config` trained with gamma weighting on
// frozen features; input embeddings and LM head come from a frozen copy of
// `lm_table`.
template <typename T>
DecoderProbe<T> train_decoder_probe(const Tensor<T>& lm_table, const model::ModelConfig& config,
                                    const FeatureSet<T>& train, const FeatureSet<T>& heldout,
                                    const ProbeConfig& budget);

// ---------------------------------------------------------------- classification

struct LabeledText {
  std::string label;
  std::string text;
};

// "label<TAB>text" per line. Throws FormatError with the byte offset of a
// line that has no tab.
std::vector<LabeledText> read_labeled_texts(const std::filesystem::path& path);

struct ClassifyConfig {
  std::size_t hidden = 0;  // 0: 4 * dim
  std::size_t epochs = 30;
  double lr = 1e-3;
  double weight_decay = 0.0;
  std::size_t batch_size = 32;
  double heldout_fraction = 0.2;
  std::uint64_t seed = 1;
};

struct ClassifyResult {
  std::vector<std::string> labels;  // class index -> label
  std::size_t n_train = 0;
  std::size_t n_heldout = 0;
  std::size_t skipped = 0;  // texts shorter than two tokens
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

// Mean of embeddings over positions 1..len-1 (position 0 excluded); texts
// longer than max_len keep their first max_len tokens.
template <typename T>
std::vector<double> mean_pool(const EmbeddingSource<T>& source, std::span<const TokenId> tokens);

using TextTokenizer = std::function<std::vector<TokenId>(const std::string&)>;

// MLP (dim -> hidden, GELU, -> hidden, GELU) plus a final linear layer to
// the classes, trained with cross entropy on pooled frozen embeddings.
template <typename T>
ClassifyResult mean_pool_classify(const EmbeddingSource<T>& source, const std::vector<LabeledText>& data,
                                  const TextTokenizer& tokenize, const ClassifyConfig& config);

}  // namespace ftp::probes

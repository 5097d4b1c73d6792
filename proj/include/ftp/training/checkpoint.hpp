#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ftp/model/models.hpp"
#include "ftp/training/optimizer.hpp"

namespace ftp::training {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// One stored tensor with its raw little-endian payload.
struct TensorRecord {
  std::string name;
  numerics::DType dtype = numerics::DType::f32;
  numerics::Shape shape;
  std::vector<unsigned char> raw;
};

// File layout: "FTPC", u32 version, u32-length config text (key=value
// lines), u32 parameter count + tensor records, u32 moment count + tensor
// records, u64 optimizer step, u64 training step, u32-length RNG state text.
// A tensor record is u32 name length, name bytes, u8 dtype (0 f32, 1 f64),
// u32 ndim, u64 extents, raw values.
struct Checkpoint {
  std::map<std::string, std::string> config;
  std::vector<TensorRecord> parameters;
  std::vector<TensorRecord> moments;  // "m/<name>" and "v/<name>"
  std::uint64_t optimizer_step = 0;
  std::uint64_t step = 0;
  std::string rng_state;
};

std::map<std::string, std::string> config_to_map(const model::ModelConfig& config);
model::ModelConfig config_from_map(const std::map<std::string, std::string>& values);

template <typename T>
TensorRecord make_record(const std::string& name, std::span<const T> values, const numerics::Shape& shape);

template <typename T>
Checkpoint make_checkpoint(const std::map<std::string, std::string>& config,
                           const std::vector<model::NamedParameter<T>>& params, const AdamState<T>* adam,
                           std::uint64_t step, const std::string& rng_state);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);

// Throws FormatError on malformed input and UnsupportedVersionError on a
// different format version.
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Copies stored tensors into params (and moments into adam when given).
// Names, dtypes and shapes must match exactly.
template <typename T>
void restore_checkpoint(const Checkpoint& checkpoint, const std::vector<model::NamedParameter<T>>& params,
                        AdamState<T>* adam);

}  // namespace ftp::training

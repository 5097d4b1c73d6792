#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ftp/gridworld/world.hpp"

namespace ftp::gridworld {

struct LengthRange {
  int min = 1;
  int max = kMaxProgramLength;
};

struct DatasetParams {
  std::size_t n_train = 50000;
  std::size_t n_test = 1000;
  std::uint64_t seed = 1;
  LengthRange len_train{6, 10};
  LengthRange len_test{1, 10};
  WorldParams world;
};

struct GridDataset {
  std::vector<GridInstance> instances;
  std::string header;  // generator parameters, as written to the file
};

struct DatasetPair {
  GridDataset train;
  GridDataset test;
};

// Number of distinct programs with length in the range.
std::uint64_t program_space(LengthRange range);

// Programs are pairwise distinct across both sets. The test set is drawn
// first; each program length is chosen uniformly among lengths that still
// have unused programs. Throws CapacityError (bound = programs available)
// when a request cannot be met.
DatasetPair generate_dataset(const DatasetParams& params);

// Header line then one "program<TAB>hex tokens" record per instance.
void write_dataset(const std::filesystem::path& path, const GridDataset& data);
// Verifies every record decodes, matches its program string and satisfies
// stop == run(start, program). Throws FormatError / DecodeError.
GridDataset read_dataset(const std::filesystem::path& path);

}  // namespace ftp::gridworld

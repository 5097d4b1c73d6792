#include "ftp/gridworld/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "ftp/core/errors.hpp"
#include "ftp/gridworld/codec.hpp"

namespace ftp::gridworld {

namespace {

constexpr const char* kMagic = "# ftp-gridworld";
constexpr int kFormatVersion = 1;
// Lengths with at most this many programs are enumerated and shuffled;
// longer ones are sampled with rejection.
constexpr std::uint64_t kEnumerateLimit = 78125;  // 5^7

std::uint64_t count_programs(int len) {
  std::uint64_t n = 1;
  for (int i = 0; i < len; ++i) n *= kInstructionCount;
  return n;
}

Program program_from_code(int len, std::uint64_t code) {
  Program p(static_cast<std::size_t>(len));
  for (int i = len; i-- > 0;) {
    p[std::size_t(i)] = static_cast<Instruction>(code % kInstructionCount);
    code /= kInstructionCount;
  }
  return p;
}

void check_range(LengthRange r, const char* what) {
  if (r.min < 1 || r.max > kMaxProgramLength || r.min > r.max) {
    throw ConfigError(std::string(what) + " length range [" + std::to_string(r.min) + ", " + std::to_string(r.max) +
                      "] outside [1, 10]");
  }
}

// Unused programs of every length, shared by both splits.
class ProgramSource {
 public:
  explicit ProgramSource(std::mt19937_64& rng) : rng_(&rng) {}

  std::uint64_t available(int len) const { return count_programs(len) - used_[std::size_t(len)]; }

  Program draw(int len) {
    const std::uint64_t total = count_programs(len);
    std::uint64_t code;
    if (total <= kEnumerateLimit) {
      auto& pool = pools_[len];
      if (pool.empty() && used_[std::size_t(len)] == 0) {
        pool.resize(total);
        std::iota(pool.begin(), pool.end(), std::uint64_t{0});
        std::shuffle(pool.begin(), pool.end(), *rng_);
      }
      code = pool.back();
      pool.pop_back();
    } else {
      std::uniform_int_distribution<std::uint64_t> pick(0, total - 1);
      do {
        code = pick(*rng_);
      } while (!seen_.insert((std::uint64_t(len) << 40) | code).second);
    }
    ++used_[std::size_t(len)];
    return program_from_code(len, code);
  }

 private:
  std::mt19937_64* rng_;
  std::map<int, std::vector<std::uint64_t>> pools_;
  std::unordered_set<std::uint64_t> seen_;
  std::uint64_t used_[kMaxProgramLength + 1] = {};
};

std::string header_line(const char* split, std::size_t n, const DatasetParams& p, LengthRange r) {
  std::ostringstream os;
  os << kMagic << " v" << kFormatVersion << " split=" << split << " n=" << n << " seed=" << p.seed
     << " len=" << r.min << "-" << r.max << " p_obstruction=" << p.world.p_obstruction
     << " p_zero=" << p.world.p_zero;
  return os.str();
}

GridDataset draw_split(ProgramSource& source, std::mt19937_64& rng, std::size_t n, LengthRange range,
                       const WorldParams& world, const char* split) {
  std::uint64_t capacity = 0;
  for (int len = range.min; len <= range.max; ++len) capacity += source.available(len);
  if (n > capacity) {
    throw CapacityError(std::string("requested ") + std::to_string(n) + " unique " + split +
                            " programs but only " + std::to_string(capacity) + " remain for lengths " +
                            std::to_string(range.min) + "-" + std::to_string(range.max),
                        capacity);
  }
  GridDataset out;
  out.instances.reserve(n);
  std::vector<int> open;
  for (std::size_t i = 0; i < n; ++i) {
    open.clear();
    for (int len = range.min; len <= range.max; ++len) {
      if (source.available(len) > 0) open.push_back(len);
    }
    const int len = open[std::uniform_int_distribution<std::size_t>(0, open.size() - 1)(rng)];
    out.instances.push_back(make_instance(rng, source.draw(len), world));
  }
  return out;
}

char hex_digit(int v) { return "0123456789abcdef"[v]; }

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  return -1;
}

}  // namespace

std::uint64_t program_space(LengthRange range) {
  check_range(range, "program");
  std::uint64_t n = 0;
  for (int len = range.min; len <= range.max; ++len) n += count_programs(len);
  return n;
}

DatasetPair generate_dataset(const DatasetParams& params) {
  check_range(params.len_train, "train");
  check_range(params.len_test, "test");
  std::mt19937_64 rng(params.seed);
  ProgramSource source(rng);
  DatasetPair out;
  out.test = draw_split(source, rng, params.n_test, params.len_test, params.world, "test");
  out.test.header = header_line("test", params.n_test, params, params.len_test);
  out.train = draw_split(source, rng, params.n_train, params.len_train, params.world, "train");
  out.train.header = header_line("train", params.n_train, params, params.len_train);
  return out;
}

void write_dataset(const std::filesystem::path& path, const GridDataset& data) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << (data.header.empty() ? std::string(kMagic) + " v1" : data.header) << '\n';
  std::string hex(2 * kSequenceLength, '0');
  for (const auto& inst : data.instances) {
    const auto ids = encode_instance(inst);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      hex[2 * i] = hex_digit(ids[i] >> 4);
      hex[2 * i + 1] = hex_digit(ids[i] & 15);
    }
    out << program_string(inst.program) << '\t' << hex << '\n';
  }
  if (!out) throw std::runtime_error("write to " + path.string() + " failed");
}

GridDataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  GridDataset data;
  std::uint64_t offset = 0;
  if (!std::getline(in, data.header) || data.header.rfind(kMagic, 0) != 0) {
    throw FormatError("missing gridworld dataset header in " + path.string(), 0);
  }
  const std::string version = std::string(kMagic) + " v" + std::to_string(kFormatVersion);
  if (data.header.rfind(version, 0) != 0 ||
      (data.header.size() > version.size() && data.header[version.size()] != ' ')) {
    throw UnsupportedVersionError("unsupported gridworld dataset header '" + data.header + "'");
  }
  offset += data.header.size() + 1;
  std::string line;
  std::vector<TokenId> ids(kSequenceLength);
  while (std::getline(in, line)) {
    const std::uint64_t line_start = offset;
    offset += line.size() + 1;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.size() - tab - 1 != 2 * kSequenceLength) {
      throw FormatError("record is not 'program<TAB>" + std::to_string(2 * kSequenceLength) + " hex digits'",
                        line_start);
    }
    for (std::size_t i = 0; i < kSequenceLength; ++i) {
      const int hi = hex_value(line[tab + 1 + 2 * i]);
      const int lo = hex_value(line[tab + 2 + 2 * i]);
      if (hi < 0 || lo < 0) throw FormatError("invalid hex digit", line_start + tab + 1 + 2 * i);
      ids[i] = TokenId(hi * 16 + lo);
    }
    Program stated;
    try {
      stated = parse_program(line.substr(0, tab));
    } catch (const FormatError& e) {
      throw FormatError("invalid program string", line_start + e.offset());
    }
    auto inst = decode_instance(ids);
    if (inst.program != stated) throw FormatError("program string disagrees with the token sequence", line_start);
    if (!inst.consistent()) throw FormatError("stop grid differs from run(start, program)", line_start);
    data.instances.push_back(std::move(inst));
  }
  return data;
}

}  // namespace ftp::gridworld

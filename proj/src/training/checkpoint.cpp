#include "ftp/training/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "ftp/core/errors.hpp"

namespace ftp::training {

namespace fs = std::filesystem;
using numerics::DType;
using numerics::Shape;

namespace {

constexpr char kMagic[4] = {'F', 'T', 'P', 'C'};

class Writer {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    out_.insert(out_.end(), p, p + n);
  }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int b = 0; b < 4; ++b) out_.push_back(static_cast<unsigned char>(v >> (8 * b)));
  }
  void u64(std::uint64_t v) {
    for (int b = 0; b < 8; ++b) out_.push_back(static_cast<unsigned char>(v >> (8 * b)));
  }
  void text(const std::string& s) {
    u32(std::uint32_t(s.size()));
    bytes(s.data(), s.size());
  }
  const std::vector<unsigned char>& data() const { return out_; }

 private:
  std::vector<unsigned char> out_;
};

class Reader {
 public:
  explicit Reader(std::vector<unsigned char> data) : data_(std::move(data)) {}

  std::uint64_t offset() const { return pos_; }
  void need(std::uint64_t n, const char* what) {
    if (data_.size() - pos_ < n) {
      throw FormatError(std::string("checkpoint truncated while reading ") + what, pos_);
    }
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return data_[pos_++];
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= std::uint32_t(data_[pos_++]) << (8 * b);
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int b = 0; b < 8; ++b) v |= std::uint64_t(data_[pos_++]) << (8 * b);
    return v;
  }
  std::vector<unsigned char> bytes(std::uint64_t n, const char* what) {
    need(n, what);
    std::vector<unsigned char> out(data_.begin() + std::ptrdiff_t(pos_), data_.begin() + std::ptrdiff_t(pos_ + n));
    pos_ += n;
    return out;
  }
  std::string text(const char* what) {
    const auto n = u32(what);
    auto b = bytes(n, what);
    return {b.begin(), b.end()};
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  std::vector<unsigned char> data_;
  std::uint64_t pos_ = 0;
};

std::size_t dtype_size(DType d) { return d == DType::f32 ? 4 : 8; }

void write_record(Writer& w, const TensorRecord& r) {
  w.text(r.name);
  w.u8(static_cast<std::uint8_t>(r.dtype));
  w.u32(std::uint32_t(r.shape.size()));
  for (auto e : r.shape) w.u64(e);
  w.bytes(r.raw.data(), r.raw.size());
}

TensorRecord read_record(Reader& r) {
  TensorRecord t;
  t.name = r.text("tensor name");
  const auto dtype_offset = r.offset();
  const auto code = r.u8("dtype");
  if (code > 1) throw FormatError("unknown dtype code " + std::to_string(code) + " for " + t.name, dtype_offset);
  t.dtype = static_cast<DType>(code);
  const auto ndim = r.u32("rank");
  if (ndim > 8) throw FormatError("implausible rank " + std::to_string(ndim) + " for " + t.name, r.offset() - 4);
  std::uint64_t numel = 1;
  for (std::uint32_t i = 0; i < ndim; ++i) {
    t.shape.push_back(r.u64("extent"));
    numel *= t.shape.back();
  }
  t.raw = r.bytes(numel * dtype_size(t.dtype), "tensor values");
  return t;
}

template <typename T>
void copy_into(const TensorRecord& rec, std::span<T> dst, const Shape& shape, const std::string& name) {
  if (rec.name != name) throw ContractError("checkpoint tensor '" + rec.name + "' where '" + name + "' was expected");
  if (rec.dtype != numerics::dtype_of<T>()) throw ContractError("checkpoint dtype mismatch for " + name);
  if (rec.shape != shape) {
    throw ContractError("checkpoint shape " + numerics::shape_str(rec.shape) + " for " + name + ", model has " +
                        numerics::shape_str(shape));
  }
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if constexpr (sizeof(T) == 4) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= std::uint32_t(rec.raw[i * 4 + std::size_t(b)]) << (8 * b);
      std::memcpy(&dst[i], &bits, 4);
    } else {
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b) bits |= std::uint64_t(rec.raw[i * 8 + std::size_t(b)]) << (8 * b);
      std::memcpy(&dst[i], &bits, 8);
    }
  }
}

}  // namespace

std::map<std::string, std::string> config_to_map(const model::ModelConfig& c) {
  auto num = [](double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
  };
  return {{"model.vocab_size", std::to_string(c.vocab_size)}, {"model.dim", std::to_string(c.dim)},
          {"model.enc_layers", std::to_string(c.enc_layers)}, {"model.dec_layers", std::to_string(c.dec_layers)},
          {"model.heads", std::to_string(c.heads)},           {"model.mlp_dim", std::to_string(c.mlp_dim)},
          {"model.enc_ctx", std::to_string(c.enc_ctx)},       {"model.n_future", std::to_string(c.n_future)},
          {"model.pseudo_seq", std::to_string(c.pseudo_seq)}, {"model.gamma", num(c.gamma)},
          {"model.dropout", num(c.dropout)}};
}

model::ModelConfig config_from_map(const std::map<std::string, std::string>& values) {
  model::ModelConfig c;
  auto get = [&](const char* key) -> const std::string& {
    auto it = values.find(key);
    if (it == values.end()) throw ConfigError(std::string("missing config key ") + key);
    return it->second;
  };
  auto count = [&](const char* key) { return std::size_t(std::stoull(get(key))); };
  c.vocab_size = count("model.vocab_size");
  c.dim = count("model.dim");
  c.enc_layers = count("model.enc_layers");
  c.dec_layers = count("model.dec_layers");
  c.heads = count("model.heads");
  c.mlp_dim = count("model.mlp_dim");
  c.enc_ctx = count("model.enc_ctx");
  c.n_future = count("model.n_future");
  c.pseudo_seq = count("model.pseudo_seq");
  c.gamma = std::stod(get("model.gamma"));
  c.dropout = std::stod(get("model.dropout"));
  return c;
}

template <typename T>
TensorRecord make_record(const std::string& name, std::span<const T> values, const Shape& shape) {
  TensorRecord r;
  r.name = name;
  r.dtype = numerics::dtype_of<T>();
  r.shape = shape;
  r.raw.reserve(values.size() * sizeof(T));
  for (T v : values) {
    if constexpr (sizeof(T) == 4) {
      std::uint32_t bits;
      std::memcpy(&bits, &v, 4);
      for (int b = 0; b < 4; ++b) r.raw.push_back(static_cast<unsigned char>(bits >> (8 * b)));
    } else {
      std::uint64_t bits;
      std::memcpy(&bits, &v, 8);
      for (int b = 0; b < 8; ++b) r.raw.push_back(static_cast<unsigned char>(bits >> (8 * b)));
    }
  }
  return r;
}

template <typename T>
Checkpoint make_checkpoint(const std::map<std::string, std::string>& config,
                           const std::vector<model::NamedParameter<T>>& params, const AdamState<T>* adam,
                           std::uint64_t step, const std::string& rng_state) {
  Checkpoint c;
  c.config = config;
  for (const auto& p : params) c.parameters.push_back(make_record<T>(p.name, p.tensor.values(), p.tensor.shape()));
  if (adam) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      c.moments.push_back(make_record<T>("m/" + params[i].name, adam->m[i], params[i].tensor.shape()));
      c.moments.push_back(make_record<T>("v/" + params[i].name, adam->v[i], params[i].tensor.shape()));
    }
    c.optimizer_step = adam->t;
  }
  c.step = step;
  c.rng_state = rng_state;
  return c;
}

void save_checkpoint(const fs::path& path, const Checkpoint& c) {
  Writer w;
  w.bytes(kMagic, 4);
  w.u32(kCheckpointVersion);
  std::string cfg;
  for (const auto& [k, v] : c.config) cfg += k + "=" + v + "\n";
  w.text(cfg);
  w.u32(std::uint32_t(c.parameters.size()));
  for (const auto& r : c.parameters) write_record(w, r);
  w.u32(std::uint32_t(c.moments.size()));
  for (const auto& r : c.moments) write_record(w, r);
  w.u64(c.optimizer_step);
  w.u64(c.step);
  w.text(c.rng_state);
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint " + tmp.string());
    out.write(reinterpret_cast<const char*>(w.data().data()), std::streamsize(w.data().size()));
    if (!out) throw std::runtime_error("failed writing checkpoint " + tmp.string());
  }
  fs::rename(tmp, path);
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::vector<unsigned char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(std::move(data));
  auto magic = r.bytes(4, "magic");
  if (std::memcmp(magic.data(), kMagic, 4) != 0) throw FormatError("not a checkpoint (bad magic bytes)", 0);
  const auto version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw UnsupportedVersionError("checkpoint format version " + std::to_string(version) + " (supported: " +
                                  std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint c;
  const auto cfg_offset = r.offset();
  std::istringstream cfg(r.text("config"));
  std::string line;
  while (std::getline(cfg, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("malformed config line '" + line + "'", cfg_offset);
    c.config[line.substr(0, eq)] = line.substr(eq + 1);
  }
  const auto n_params = r.u32("parameter count");
  for (std::uint32_t i = 0; i < n_params; ++i) c.parameters.push_back(read_record(r));
  const auto n_moments = r.u32("moment count");
  for (std::uint32_t i = 0; i < n_moments; ++i) c.moments.push_back(read_record(r));
  c.optimizer_step = r.u64("optimizer step");
  c.step = r.u64("step");
  c.rng_state = r.text("rng state");
  if (!r.done()) throw FormatError("trailing bytes after checkpoint", r.offset());
  return c;
}

template <typename T>
void restore_checkpoint(const Checkpoint& c, const std::vector<model::NamedParameter<T>>& params, AdamState<T>* adam) {
  if (c.parameters.size() != params.size()) {
    throw ContractError("checkpoint holds " + std::to_string(c.parameters.size()) + " tensors, model has " +
                        std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    numerics::Tensor<T> handle = params[i].tensor;
    copy_into<T>(c.parameters[i], handle.mutable_values(), handle.shape(), params[i].name);
  }
  if (!adam) return;
  if (c.moments.size() != 2 * params.size()) throw ContractError("checkpoint lacks optimizer moments");
  *adam = make_adam_state(params);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& shape = params[i].tensor.shape();
    copy_into<T>(c.moments[2 * i], std::span<T>(adam->m[i]), shape, "m/" + params[i].name);
    copy_into<T>(c.moments[2 * i + 1], std::span<T>(adam->v[i]), shape, "v/" + params[i].name);
  }
  adam->t = c.optimizer_step;
}

#define FTP_INSTANTIATE(T)                                                                                     \
  template TensorRecord make_record(const std::string&, std::span<const T>, const Shape&);                   \
  template Checkpoint make_checkpoint(const std::map<std::string, std::string>&,                             \
                                      const std::vector<model::NamedParameter<T>>&, const AdamState<T>*,     \
                                      std::uint64_t, const std::string&);                                    \
  template void restore_checkpoint(const Checkpoint&, const std::vector<model::NamedParameter<T>>&, AdamState<T>*);

FTP_INSTANTIATE(float)
FTP_INSTANTIATE(double)
#undef FTP_INSTANTIATE

}  // namespace ftp::training

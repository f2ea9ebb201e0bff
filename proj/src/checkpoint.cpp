#include "optenc/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <type_traits>
#include <string>
#include <vector>

#include "optenc/error.hpp"

namespace optenc {
namespace {

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  template <typename T>
  void le(T value) {
    std::uint64_t bits = 0;
    if constexpr (std::is_floating_point_v<T>) {
      bits = std::bit_cast<std::uint64_t>(static_cast<double>(value));
    } else {
      bits = static_cast<std::uint64_t>(value);
    }
    for (std::size_t i = 0; i < sizeof(T); ++i) buf_.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
  }
  const std::vector<char>& data() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  explicit Reader(std::vector<char> data) : buf_(std::move(data)) {}

  void need(std::size_t n) const {
    if (pos_ + n > buf_.size()) throw FormatError("checkpoint truncated at byte " + std::to_string(pos_));
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  std::uint64_t le_bits(std::size_t width) {
    need(width);
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < width; ++i)
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += width;
    return bits;
  }
  std::uint32_t u32() { return static_cast<std::uint32_t>(le_bits(4)); }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  std::uint64_t u64() { return le_bits(8); }
  double f64() { return std::bit_cast<double>(le_bits(8)); }
  bool at_end() const { return pos_ == buf_.size(); }

 private:
  std::vector<char> buf_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const ParameterSet& params, const ModelConfig& cfg,
                     const std::filesystem::path& path) {
  Writer w;
  w.bytes(kCheckpointMagic, 4);
  w.le<std::uint32_t>(kCheckpointVersion);
  for (int v : {cfg.layers, cfg.hidden, cfg.heads, cfg.ffn_mult, cfg.vocab_size, cfg.max_len,
                cfg.segment_count, cfg.classes})
    w.le<std::uint32_t>(static_cast<std::uint32_t>(v));
  w.le<double>(cfg.dropout);
  const auto names = params.names();
  const auto tensors = params.tensors();
  w.le<std::uint32_t>(static_cast<std::uint32_t>(tensors.size()));
  for (std::size_t t = 0; t < tensors.size(); ++t) {
    const Matrix& m = *tensors[t];
    w.le<std::uint32_t>(static_cast<std::uint32_t>(names[t].size()));
    w.bytes(names[t].data(), names[t].size());
    w.le<std::uint64_t>(static_cast<std::uint64_t>(m.rows()));
    w.le<std::uint64_t>(static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) w.le<double>(m(i, j));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(w.data().data(), static_cast<std::streamsize>(w.data().size()));
  if (!out) throw IoError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  Reader r(std::vector<char>(std::istreambuf_iterator<char>(in), {}));

  if (r.bytes(4) != std::string(kCheckpointMagic, 4)) throw FormatError("not a checkpoint (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw VersionError("checkpoint version " + std::to_string(version) + ", expected " +
                       std::to_string(kCheckpointVersion));
  Checkpoint ck;
  ModelConfig& c = ck.config;
  c.layers = r.i32();
  c.hidden = r.i32();
  c.heads = r.i32();
  c.ffn_mult = r.i32();
  c.vocab_size = r.i32();
  c.max_len = r.i32();
  c.segment_count = r.i32();
  c.classes = r.i32();
  c.dropout = r.f64();
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint config: ") + e.what());
  }

  ck.params = init_parameters(c, 0);
  const auto names = ck.params.names();
  auto tensors = ck.params.tensors();
  if (r.u32() != tensors.size()) throw FormatError("checkpoint tensor count mismatch");
  for (std::size_t t = 0; t < tensors.size(); ++t) {
    const std::string name = r.bytes(r.u32());
    if (name != names[t]) throw FormatError("unexpected tensor '" + name + "'");
    Matrix& m = *tensors[t];
    const auto rows = r.u64();
    const auto cols = r.u64();
    if (rows != static_cast<std::uint64_t>(m.rows()) || cols != static_cast<std::uint64_t>(m.cols()))
      throw FormatError("shape mismatch for tensor '" + name + "'");
    r.need(rows * cols * 8);
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = r.f64();
  }
  if (!r.at_end()) throw FormatError("trailing bytes after checkpoint tensors");
  return ck;
}

}  // namespace optenc

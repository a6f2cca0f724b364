#include "alt/checkpoint.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "alt/errors.hpp"

namespace alt::lm {

namespace {

constexpr std::array<char, 8> kMagic{'A', 'L', 'T', 'C', 'K', 'P', 'T', '\0'};

class Writer {
 public:
  explicit Writer(const std::string& path) : out_(path, std::ios::binary) {
    if (!out_) throw std::runtime_error("cannot write checkpoint " + path);
  }
  void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  void u32(std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    bytes(b, 4);
  }
  void u64(std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    bytes(b, 8);
  }
  void f32(float f) { u32(std::bit_cast<std::uint32_t>(f)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void tensor(const std::string& name, const std::vector<std::uint64_t>& shape, const float* data, std::size_t n) {
    str(name);
    u32(static_cast<std::uint32_t>(shape.size()));
    for (const auto s : shape) u64(s);
    for (std::size_t i = 0; i < n; ++i) f32(data[i]);
  }
  void finish() {
    out_.flush();
    if (!out_) throw std::runtime_error("checkpoint write failed");
  }

 private:
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::string& path) : in_(path, std::ios::binary) {
    if (!in_) throw ValidationError("cannot read checkpoint " + path);
  }
  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!in_) throw ValidationError("truncated checkpoint");
  }
  std::uint32_t u32() {
    unsigned char b[4];
    bytes(b, 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    unsigned char b[8];
    bytes(b, 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str() {
    std::string s(u32(), '\0');
    bytes(s.data(), s.size());
    return s;
  }
  NamedTensor tensor() {
    NamedTensor t;
    t.name = str();
    const auto rank = u32();
    std::uint64_t n = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      t.shape.push_back(u64());
      n *= t.shape.back();
    }
    t.data.resize(n);
    for (auto& v : t.data) v = f32();
    return t;
  }

 private:
  std::ifstream in_;
};

struct RawCheckpoint {
  nlohmann::json header;
  std::vector<NamedTensor> tensors;
};

RawCheckpoint read_raw(const std::string& path) {
  Reader r(path);
  std::array<char, 8> magic{};
  r.bytes(magic.data(), magic.size());
  if (magic != kMagic) throw ValidationError(path + " is not a checkpoint file");
  const auto version = r.u32();
  if (version != kCheckpointVersion) {
    throw ValidationError("unsupported checkpoint format version " + std::to_string(version));
  }
  RawCheckpoint raw;
  raw.header = nlohmann::json::parse(r.str());
  const auto count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) raw.tensors.push_back(r.tensor());
  return raw;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  Writer w(path);
  w.bytes(kMagic.data(), kMagic.size());
  w.u32(kCheckpointVersion);
  const nlohmann::json header{{"config", ckpt.params.config.to_json()}, {"step", ckpt.step}, {"meta", ckpt.meta}};
  w.str(header.dump());
  w.u32(static_cast<std::uint32_t>(ckpt.params.layout.tensors().size() + ckpt.extra.size()));
  for (const auto& t : ckpt.params.layout.tensors()) {
    std::vector<std::uint64_t> shape(t.shape.begin(), t.shape.end());
    w.tensor(t.name, shape, ckpt.params.values.data() + t.offset, t.size);
  }
  for (const auto& t : ckpt.extra) w.tensor(t.name, t.shape, t.data.data(), t.data.size());
  w.finish();
}

Checkpoint load_checkpoint(const std::string& path) {
  auto raw = read_raw(path);
  Checkpoint ckpt;
  const auto config = ModelConfig::from_json(raw.header.at("config"));
  ckpt.params = Parameters<float>(config);
  ckpt.step = raw.header.value("step", std::uint64_t{0});
  ckpt.meta = raw.header.value("meta", nlohmann::json::object());
  const auto& layout = ckpt.params.layout.tensors();
  if (raw.tensors.size() < layout.size()) throw ValidationError("checkpoint is missing model tensors");
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto& info = layout[i];
    const auto& t = raw.tensors[i];
    if (t.name != info.name || t.data.size() != info.size) {
      throw ValidationError("checkpoint tensor '" + t.name + "' does not match model layout ('" + info.name + "')");
    }
    std::copy(t.data.begin(), t.data.end(), ckpt.params.values.begin() + static_cast<std::ptrdiff_t>(info.offset));
  }
  ckpt.extra.assign(std::make_move_iterator(raw.tensors.begin() + static_cast<std::ptrdiff_t>(layout.size())),
                    std::make_move_iterator(raw.tensors.end()));
  return ckpt;
}

nlohmann::json inspect_checkpoint(const std::string& path) {
  const auto raw = read_raw(path);
  nlohmann::json out = raw.header;
  out["format_version"] = kCheckpointVersion;
  out["tensors"] = nlohmann::json::array();
  std::uint64_t total = 0;
  for (const auto& t : raw.tensors) {
    double sq = 0.0;
    for (const float v : t.data) sq += static_cast<double>(v) * v;
    out["tensors"].push_back({{"name", t.name}, {"shape", t.shape}, {"l2_norm", std::sqrt(sq)}});
    total += t.data.size();
  }
  out["total_values"] = total;
  return out;
}

}  // namespace alt::lm

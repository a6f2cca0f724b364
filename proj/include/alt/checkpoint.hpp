#pragma once

// Binary checkpoint format (all integers and floats little-endian):
//
//   bytes 0..7   magic "ALTCKPT\0"
//   u32          format version (currently 1)
//   u32          header length H, followed by H bytes of UTF-8 JSON:
//                {"config": ModelConfig, "step": u64, "meta": {...}}
//   u32          tensor count N, then N records of
//                  u32 name length, name bytes, u32 rank, rank x u64 dims,
//                  prod(dims) x f32 values
//
// Model tensors come first, in ParamLayout order, followed by any extra
// tensors (optimizer moments are stored as "adam.m/<name>", "adam.v/<name>").

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "alt/model.hpp"

namespace alt::lm {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  std::vector<std::uint64_t> shape;
  std::vector<float> data;
  bool operator==(const NamedTensor&) const = default;
};

struct Checkpoint {
  Parameters<float> params;
  std::uint64_t step = 0;
  nlohmann::json meta = nlohmann::json::object();
  std::vector<NamedTensor> extra;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

/// Config, step, meta and per-tensor shape / L2 norm, for `checkpoint inspect`.
nlohmann::json inspect_checkpoint(const std::string& path);

}  // namespace alt::lm

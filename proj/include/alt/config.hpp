#pragma once

// Resolved run configuration: profile defaults, then an optional JSON file,
// then --set overrides. Unknown keys are rejected at every level.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "alt/alt_loop.hpp"
#include "alt/corpus.hpp"
#include "alt/eval.hpp"
#include "alt/model.hpp"
#include "alt/pretrain.hpp"

namespace alt::cfg {

struct RuntimeConfig {
  int workers = 1;
  std::string runs_dir = "runs";
};

struct RunConfig {
  std::string profile = "alt_rm_toxicity";
  std::uint64_t seed = 1;
  CorpusSpec corpus;
  int k_quantiles = 5;
  lm::ModelConfig model;
  pre::PretrainConfig pretrain;
  loop::LoopConfig loop;
  eval::EvalConfig eval;
  /// Execution knobs that do not change results; excluded from the hash.
  RuntimeConfig runtime;

  void validate() const;
  nlohmann::json to_json() const;
  /// Hex FNV-1a 64 of the canonical JSON without the runtime block.
  std::string hash() const;
};

std::vector<std::string> profile_names();
/// Defaults of a named profile; ValidationError listing the profiles otherwise.
nlohmann::json profile_defaults(const std::string& name);

/// Throws ValidationError naming the first key of `input` that `reference`
/// does not have. Objects are compared recursively.
void reject_unknown_keys(const nlohmann::json& input, const nlohmann::json& reference, const std::string& where = "");

/// Applies "a.b.c=value"; value is parsed as JSON, falling back to a string.
void apply_override(nlohmann::json& config, const std::string& assignment);

RunConfig from_json(const nlohmann::json& j);
/// profile defaults <- file (if any) <- overrides. The file's "profile" key
/// is honoured when `profile` is empty.
RunConfig resolve(const std::string& profile, const std::optional<std::string>& file,
                  const std::vector<std::string>& overrides);

/// The desk task vocabulary: built-in lexicons, k quantile tokens and the
/// feedback control words.
Vocabulary desk_vocabulary(int k_quantiles);

std::string fnv1a_hex(const std::string& data);

}  // namespace alt::cfg

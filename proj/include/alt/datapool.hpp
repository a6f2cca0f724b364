#pragma once

// The data pool: append-only (prompt, generation, feedback, reward, iteration)
// records, plus the truncation filter and per-category balanced selection used
// to build each iteration's training set.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "alt/corpus.hpp"
#include "alt/feedback.hpp"

namespace alt::pool {

inline constexpr int kPoolFormatVersion = 1;

struct PoolEntry {
  TokenSeq prompt;
  TokenSeq generation;
  feedback::Feedback feedback;
  std::optional<double> reward;
  int iteration = 1;
  bool truncated = false;

  /// Throws ValidationError naming `index` when an invariant is broken.
  void validate(std::size_t index) const;
  nlohmann::json to_json() const;
  static PoolEntry from_json(const nlohmann::json& j);
  bool operator==(const PoolEntry&) const = default;
};

struct Provenance {
  std::string run_id;
  std::string config_hash;
  bool operator==(const Provenance&) const = default;
};

class DataPool {
 public:
  DataPool() = default;
  explicit DataPool(Provenance provenance) : provenance_(std::move(provenance)) {}

  /// Validates every entry first; nothing is appended if any entry is invalid.
  /// Iterations must never go backwards.
  void add_batch(std::vector<PoolEntry> entries);

  const std::vector<PoolEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  const Provenance& provenance() const { return provenance_; }
  std::vector<PoolEntry> iteration(int k) const;

  /// One JSON object per line, version header first. A ".gz" suffix writes gzip.
  void save(const std::string& path) const;
  static DataPool load(const std::string& path);

  /// Per-iteration entry counts, truncation counts and category histograms.
  nlohmann::json stats() const;

 private:
  Provenance provenance_;
  std::vector<PoolEntry> entries_;
};

std::vector<PoolEntry> filter_non_truncated(std::span<const PoolEntry> entries);

struct SelectionReport {
  std::map<int, std::size_t> available;
  std::map<int, std::size_t> selected;
  std::vector<int> underfilled;  // categories with fewer than n entries
};

/// Per category (ascending, best first) draws min(n, available) entries
/// without replacement; selected entries keep their original relative order.
std::vector<PoolEntry> balanced_select(std::span<const PoolEntry> entries, int n_per_category, std::uint64_t seed,
                                       SelectionReport* report = nullptr);

}  // namespace alt::pool

#include "alt/datapool.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <zlib.h>

#include "alt/errors.hpp"
#include "alt/rng.hpp"

namespace alt::pool {

void PoolEntry::validate(std::size_t index) const {
  const auto where = " (entry " + std::to_string(index) + ")";
  if (iteration < 1) throw ValidationError("pool entry iteration must be >= 1" + where);
  if (generation.empty() && !truncated) throw ValidationError("empty generation must be flagged truncated" + where);
  if (feedback::feedback_text(feedback).empty()) throw ValidationError("pool entry feedback text is empty" + where);
  if (const auto* u = std::get_if<feedback::UnconstrainedFeedback>(&feedback)) {
    if (u->score < 0 || u->score > feedback::kMaxUnconstrainedScore) throw ValidationError("score out of range" + where);
  }
  if (reward && !std::isfinite(*reward)) throw ValidationError("pool entry reward is not finite" + where);
}

nlohmann::json PoolEntry::to_json() const {
  nlohmann::json fb;
  fb["text"] = feedback::feedback_text(feedback);
  const auto cat = feedback::feedback_category(feedback);
  fb["category"] = cat ? nlohmann::json(*cat) : nlohmann::json(nullptr);
  if (const auto* u = std::get_if<feedback::UnconstrainedFeedback>(&feedback)) {
    fb["analysis"] = u->analysis;
    fb["score"] = u->score;
  }
  nlohmann::json j;
  j["prompt"] = prompt;
  j["generation"] = generation;
  j["feedback"] = fb;
  j["reward"] = reward ? nlohmann::json(*reward) : nlohmann::json(nullptr);
  j["iteration"] = iteration;
  j["truncated"] = truncated;
  return j;
}

PoolEntry PoolEntry::from_json(const nlohmann::json& j) {
  PoolEntry e;
  e.prompt = j.at("prompt").get<TokenSeq>();
  e.generation = j.at("generation").get<TokenSeq>();
  const auto& fb = j.at("feedback");
  if (fb.contains("score")) {
    e.feedback = feedback::UnconstrainedFeedback{fb.value("analysis", std::string{}), fb.at("text").get<std::string>(),
                                                 fb.at("score").get<int>()};
  } else {
    feedback::FeedbackLabel label{fb.at("text").get<std::string>(), std::nullopt};
    if (fb.contains("category") && !fb["category"].is_null()) label.category = fb["category"].get<int>();
    e.feedback = label;
  }
  if (j.contains("reward") && !j["reward"].is_null()) e.reward = j["reward"].get<double>();
  e.iteration = j.at("iteration").get<int>();
  e.truncated = j.at("truncated").get<bool>();
  return e;
}

void DataPool::add_batch(std::vector<PoolEntry> entries) {
  int last = entries_.empty() ? 1 : entries_.back().iteration;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    entries[i].validate(i);
    if (entries[i].iteration < last) {
      throw ValidationError("pool is append-only: iteration " + std::to_string(entries[i].iteration) +
                            " follows iteration " + std::to_string(last) + " (entry " + std::to_string(i) + ")");
    }
    last = entries[i].iteration;
  }
  entries_.insert(entries_.end(), std::make_move_iterator(entries.begin()), std::make_move_iterator(entries.end()));
}

std::vector<PoolEntry> DataPool::iteration(int k) const {
  std::vector<PoolEntry> out;
  for (const auto& e : entries_) {
    if (e.iteration == k) out.push_back(e);
  }
  return out;
}

namespace {

bool is_gzip_path(const std::string& path) { return path.size() > 3 && path.compare(path.size() - 3, 3, ".gz") == 0; }

std::string header_line(const Provenance& p) {
  return nlohmann::json{{"format", "alt-pool"},
                        {"version", kPoolFormatVersion},
                        {"run_id", p.run_id},
                        {"config_hash", p.config_hash}}
      .dump();
}

}  // namespace

void DataPool::save(const std::string& path) const {
  std::string text = header_line(provenance_) + "\n";
  for (const auto& e : entries_) text += e.to_json().dump() + "\n";
  if (is_gzip_path(path)) {
    gzFile gz = gzopen(path.c_str(), "wb9");
    if (!gz) throw std::runtime_error("cannot write " + path);
    const int written = gzwrite(gz, text.data(), static_cast<unsigned>(text.size()));
    gzclose(gz);
    if (written != static_cast<int>(text.size())) throw std::runtime_error("gzip write failed for " + path);
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path);
}

DataPool DataPool::load(const std::string& path) {
  std::string text;
  if (is_gzip_path(path)) {
    gzFile gz = gzopen(path.c_str(), "rb");
    if (!gz) throw ValidationError("cannot read pool " + path);
    char buf[1 << 15];
    int n = 0;
    while ((n = gzread(gz, buf, sizeof buf)) > 0) text.append(buf, static_cast<std::size_t>(n));
    gzclose(gz);
  } else {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot read pool " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    text = ss.str();
  }
  std::istringstream lines(text);
  std::string line;
  if (!std::getline(lines, line)) throw ValidationError("pool file " + path + " is empty");
  const auto header = nlohmann::json::parse(line);
  if (header.value("format", std::string{}) != "alt-pool") throw ValidationError(path + " is not a pool file");
  if (header.value("version", 0) != kPoolFormatVersion) throw ValidationError("unsupported pool format version");
  DataPool pool(Provenance{header.value("run_id", std::string{}), header.value("config_hash", std::string{})});
  std::vector<PoolEntry> entries;
  while (std::getline(lines, line)) {
    if (!line.empty()) entries.push_back(PoolEntry::from_json(nlohmann::json::parse(line)));
  }
  pool.add_batch(std::move(entries));
  return pool;
}

nlohmann::json DataPool::stats() const {
  std::map<int, nlohmann::json> per_iter;
  for (const auto& e : entries_) {
    auto& s = per_iter[e.iteration];
    if (s.is_null()) s = {{"iteration", e.iteration}, {"entries", 0}, {"truncated", 0}, {"categories", nlohmann::json::object()}};
    s["entries"] = s["entries"].get<int>() + 1;
    if (e.truncated) s["truncated"] = s["truncated"].get<int>() + 1;
    const auto cat = feedback::feedback_category(e.feedback);
    const auto key = cat ? std::to_string(*cat) : std::string("none");
    s["categories"][key] = s["categories"].value(key, 0) + 1;
  }
  nlohmann::json out;
  out["run_id"] = provenance_.run_id;
  out["config_hash"] = provenance_.config_hash;
  out["total_entries"] = entries_.size();
  out["iterations"] = nlohmann::json::array();
  for (auto& [k, s] : per_iter) out["iterations"].push_back(s);
  return out;
}

std::vector<PoolEntry> filter_non_truncated(std::span<const PoolEntry> entries) {
  std::vector<PoolEntry> out;
  for (const auto& e : entries) {
    if (!e.truncated) out.push_back(e);
  }
  return out;
}

std::vector<PoolEntry> balanced_select(std::span<const PoolEntry> entries, int n_per_category, std::uint64_t seed,
                                       SelectionReport* report) {
  if (n_per_category < 0) throw ValidationError("n_per_category must be >= 0");
  std::map<int, std::vector<std::size_t>> by_category;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto cat = feedback::feedback_category(entries[i].feedback);
    if (!cat) throw ValidationError("balanced_select needs categorized entries (entry " + std::to_string(i) + ")");
    by_category[*cat].push_back(i);
  }
  Rng rng(seed);
  std::vector<PoolEntry> out;
  for (auto& [cat, idx] : by_category) {
    const auto take = std::min(idx.size(), static_cast<std::size_t>(n_per_category));
    // Partial Fisher-Yates: the first `take` slots become a uniform sample.
    for (std::size_t i = 0; i < take; ++i) {
      const auto j = i + static_cast<std::size_t>(rng.below(idx.size() - i));
      std::swap(idx[i], idx[j]);
    }
    std::vector<std::size_t> chosen(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take));
    std::sort(chosen.begin(), chosen.end());
    for (const auto i : chosen) out.push_back(entries[i]);
    if (report) {
      report->available[cat] = idx.size();
      report->selected[cat] = take;
      if (take < static_cast<std::size_t>(n_per_category)) report->underfilled.push_back(cat);
    }
  }
  return out;
}

}  // namespace alt::pool

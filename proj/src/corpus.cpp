#include "alt/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "alt/errors.hpp"
#include "alt/rng.hpp"

namespace alt {

namespace {

void check_word(const std::string& w) {
  if (w.empty()) throw ValidationError("vocabulary word is empty");
  if (w == ",") return;
  for (const char c : w) {
    if (std::isspace(static_cast<unsigned char>(c)) || c == ',') {
      throw ValidationError("vocabulary word '" + w + "' contains whitespace or ','");
    }
  }
}

}  // namespace

Vocabulary Vocabulary::build(const std::vector<std::string>& neutral, const std::vector<std::string>& toxic,
                             int k_quantiles, const std::vector<std::string>& control) {
  if (neutral.empty() || toxic.empty()) throw ValidationError("neutral and toxic word lists must be non-empty");
  if (k_quantiles < 1) throw ValidationError("k_quantiles must be >= 1");

  Vocabulary v;
  auto add = [&v](const std::string& w) {
    if (!v.index_.emplace(w, static_cast<TokenId>(v.tokens_.size())).second) {
      throw ValidationError("duplicate or overlapping vocabulary word '" + w + "'");
    }
    v.tokens_.push_back(w);
    return static_cast<TokenId>(v.tokens_.size() - 1);
  };

  for (const auto& w : neutral) {
    check_word(w);
    v.neutral_.push_back(add(w));
  }
  for (const auto& w : toxic) {
    check_word(w);
    v.toxic_.push_back(add(w));
  }
  v.special_.pad = add(std::string(kPadToken));
  v.special_.eos = add(std::string(kEosToken));
  v.special_.separator = add(std::string(kSeparatorToken));
  for (int q = 0; q < k_quantiles; ++q) v.special_.quantile.push_back(add("<|quantile_" + std::to_string(q) + "|>"));
  for (const auto& w : control) {
    check_word(w);
    v.control_.push_back(add(w));
  }
  return v;
}

Vocabulary build_vocabulary(const std::vector<std::string>& neutral, const std::vector<std::string>& toxic,
                            int k_quantiles, const std::vector<std::string>& control) {
  return Vocabulary::build(neutral, toxic, k_quantiles, control);
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw ValidationError("token id " + std::to_string(id) + " out of range");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::optional<TokenId> Vocabulary::find(std::string_view word) const {
  const auto it = index_.find(std::string(word));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

TokenId Vocabulary::id(std::string_view word) const {
  if (auto found = find(word)) return *found;
  throw ValidationError("word '" + std::string(word) + "' is not in the vocabulary");
}

bool Vocabulary::is_toxic(TokenId id) const {
  // Toxic ids are one contiguous block right after the neutral words.
  return !toxic_.empty() && id >= toxic_.front() && id <= toxic_.back();
}

bool Vocabulary::is_special(TokenId id) const {
  if (id == special_.pad || id == special_.eos || id == special_.separator) return true;
  return !special_.quantile.empty() && id >= special_.quantile.front() && id <= special_.quantile.back();
}

TokenSeq Vocabulary::tokenize(std::string_view text) const {
  TokenSeq out;
  std::string piece;
  auto flush = [&] {
    if (!piece.empty()) {
      out.push_back(id(piece));
      piece.clear();
    }
  };
  for (const char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      flush();
    } else if (c == ',') {
      flush();
      out.push_back(id(","));
    } else {
      piece.push_back(c);
    }
  }
  flush();
  return out;
}

std::string Vocabulary::detokenize(std::span<const TokenId> ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out.push_back(' ');
    out += token(ids[i]);
  }
  return out;
}

nlohmann::json Vocabulary::to_json() const {
  nlohmann::json j;
  j["tokens"] = tokens_;
  j["special"] = {{"pad_id", special_.pad},
                  {"eos_id", special_.eos},
                  {"separator_id", special_.separator},
                  {"quantile_token_ids", special_.quantile}};
  j["toxic"] = toxic_;
  j["neutral"] = neutral_;
  j["control"] = control_;
  return j;
}

Vocabulary Vocabulary::from_json(const nlohmann::json& j) {
  const auto tokens = j.at("tokens").get<std::vector<std::string>>();
  const auto neutral_ids = j.at("neutral").get<std::vector<TokenId>>();
  const auto toxic_ids = j.at("toxic").get<std::vector<TokenId>>();
  const auto control_ids = j.value("control", std::vector<TokenId>{});
  const auto quantiles = j.at("special").at("quantile_token_ids").get<std::vector<TokenId>>();
  auto words = [&tokens](const std::vector<TokenId>& ids) {
    std::vector<std::string> out;
    for (const auto id : ids) {
      if (id < 0 || static_cast<std::size_t>(id) >= tokens.size()) throw ValidationError("vocabulary id out of range");
      out.push_back(tokens[static_cast<std::size_t>(id)]);
    }
    return out;
  };
  Vocabulary v = build(words(neutral_ids), words(toxic_ids), static_cast<int>(quantiles.size()), words(control_ids));
  if (v.tokens_ != tokens) throw ValidationError("vocabulary file does not follow the dense id layout");
  return v;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << to_json().dump() << '\n';
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read vocabulary " + path);
  return from_json(nlohmann::json::parse(in));
}

void CorpusSpec::validate() const {
  if (num_documents < 0) throw ValidationError("corpus.num_documents must be >= 0");
  if (doc_length < 1) throw ValidationError("corpus.doc_length must be >= 1");
  if (toxic_rate_levels.empty()) throw ValidationError("corpus.toxic_rate_levels must be non-empty");
  for (const double p : toxic_rate_levels) {
    if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("corpus.toxic_rate_levels must lie in [0,1]");
  }
  if (prompt_length < 0 || prompt_length >= doc_length) {
    throw ValidationError("corpus.prompt_length must satisfy 0 <= prompt_length < doc_length");
  }
}

nlohmann::json CorpusSpec::to_json() const {
  return {{"seed", seed},
          {"num_documents", num_documents},
          {"doc_length", doc_length},
          {"toxic_rate_levels", toxic_rate_levels},
          {"prompt_length", prompt_length}};
}

CorpusSpec CorpusSpec::from_json(const nlohmann::json& j) {
  CorpusSpec s;
  s.seed = j.value("seed", s.seed);
  s.num_documents = j.value("num_documents", s.num_documents);
  s.doc_length = j.value("doc_length", s.doc_length);
  s.toxic_rate_levels = j.value("toxic_rate_levels", s.toxic_rate_levels);
  s.prompt_length = j.value("prompt_length", s.prompt_length);
  return s;
}

std::vector<Document> generate_corpus(const Vocabulary& vocab, const CorpusSpec& spec) {
  spec.validate();
  const auto neutral = vocab.neutral_lexicon();
  const auto toxic = vocab.toxic_lexicon();
  if (neutral.empty() || toxic.empty()) throw ValidationError("corpus generation needs non-empty lexicons");

  Rng rng(spec.seed);
  std::vector<Document> docs;
  docs.reserve(static_cast<std::size_t>(spec.num_documents));
  for (int d = 0; d < spec.num_documents; ++d) {
    Document doc;
    doc.toxic_rate = spec.toxic_rate_levels[rng.below(spec.toxic_rate_levels.size())];
    doc.tokens.reserve(static_cast<std::size_t>(spec.doc_length));
    for (int t = 0; t + 1 < spec.doc_length; ++t) {
      if (rng.uniform() < doc.toxic_rate) {
        doc.tokens.push_back(toxic[rng.below(toxic.size())]);
      } else {
        doc.tokens.push_back(neutral[rng.below(neutral.size())]);
      }
    }
    doc.tokens.push_back(vocab.special().eos);
    docs.push_back(std::move(doc));
  }
  return docs;
}

PromptSet extract_prompts(std::span<const Document> corpus, const CorpusSpec& spec) {
  if (spec.prompt_length < 0 || spec.prompt_length >= spec.doc_length) {
    throw ValidationError("prompt_length must be < doc_length");
  }
  PromptSet set;
  set.degenerate = spec.prompt_length == 0;
  set.prompts.reserve(corpus.size());
  for (const auto& doc : corpus) {
    const auto n = std::min<std::size_t>(static_cast<std::size_t>(spec.prompt_length), doc.tokens.size());
    set.prompts.emplace_back(doc.tokens.begin(), doc.tokens.begin() + static_cast<std::ptrdiff_t>(n));
  }
  return set;
}

void save_corpus(const std::string& path, std::span<const Document> corpus) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const auto& doc : corpus) {
    out << nlohmann::json{{"tokens", doc.tokens}, {"toxic_rate", doc.toxic_rate}}.dump() << '\n';
  }
}

std::vector<Document> load_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read corpus " + path);
  std::vector<Document> docs;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    docs.push_back({j.at("tokens").get<TokenSeq>(), j.at("toxic_rate").get<double>()});
  }
  return docs;
}

std::vector<std::string> desk_neutral_words() {
  return {"the",  "a",    "sun",  "tree", "river", "bird", "calm",  "green", "walk", "read", "light", "stone",
          "rain", "song", "warm", "open", "field", "cloud", "quiet", "bread", "path", "lake", "kind",  "slow"};
}

std::vector<std::string> desk_toxic_words() {
  return {"grr", "ugh", "blah", "drat", "pfft", "bah", "argh", "hmph"};
}

}  // namespace alt

#pragma once

// Synthetic text universe: closed word-level vocabulary, tokenizer, and a
// corpus generator with a controllable toxic-lexicon rate.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace alt {

using TokenId = std::int32_t;
using TokenSeq = std::vector<TokenId>;

inline constexpr std::string_view kPadToken = "<|pad|>";
inline constexpr std::string_view kEosToken = "<|endoftext|>";
inline constexpr std::string_view kSeparatorToken = "<|separator|>";

struct SpecialTokens {
  TokenId pad = -1;
  TokenId eos = -1;
  TokenId separator = -1;
  std::vector<TokenId> quantile;  // one per quantile, best first
};

/// Dense id space laid out as
///   [neutral words][toxic words][pad, eos, separator][quantile tokens][control words].
/// Control words are the vocabulary of feedback phrases; the corpus generator
/// never emits them.
class Vocabulary {
 public:
  static Vocabulary build(const std::vector<std::string>& neutral, const std::vector<std::string>& toxic,
                          int k_quantiles, const std::vector<std::string>& control = {});

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(TokenId id) const;
  std::optional<TokenId> find(std::string_view word) const;
  /// Like find() but throws ValidationError for unknown words.
  TokenId id(std::string_view word) const;

  const SpecialTokens& special() const { return special_; }
  std::span<const TokenId> neutral_lexicon() const { return neutral_; }
  std::span<const TokenId> toxic_lexicon() const { return toxic_; }
  std::span<const TokenId> control_words() const { return control_; }
  int k_quantiles() const { return static_cast<int>(special_.quantile.size()); }

  bool is_toxic(TokenId id) const;
  /// pad, eos, separator and quantile tokens.
  bool is_special(TokenId id) const;

  /// Splits on whitespace, with ',' always a token of its own. Every piece must
  /// be in the vocabulary.
  TokenSeq tokenize(std::string_view text) const;
  std::string detokenize(std::span<const TokenId> ids) const;

  nlohmann::json to_json() const;
  static Vocabulary from_json(const nlohmann::json& j);
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_ && toxic_ == other.toxic_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
  SpecialTokens special_;
  std::vector<TokenId> neutral_;
  std::vector<TokenId> toxic_;
  std::vector<TokenId> control_;
};

Vocabulary build_vocabulary(const std::vector<std::string>& neutral, const std::vector<std::string>& toxic,
                            int k_quantiles, const std::vector<std::string>& control = {});

struct CorpusSpec {
  std::uint64_t seed = 7;
  int num_documents = 3000;
  int doc_length = 24;
  std::vector<double> toxic_rate_levels{0.0, 0.3, 0.6};
  int prompt_length = 6;

  void validate() const;
  nlohmann::json to_json() const;
  static CorpusSpec from_json(const nlohmann::json& j);
};

struct Document {
  TokenSeq tokens;
  double toxic_rate = 0.0;
  bool operator==(const Document&) const = default;
};

/// One Rng(spec.seed) stream, consumed per document as: level index, then per
/// content token one uniform (toxic iff u < rate) and one lexicon index.
std::vector<Document> generate_corpus(const Vocabulary& vocab, const CorpusSpec& spec);

struct PromptSet {
  std::vector<TokenSeq> prompts;
  bool degenerate = false;  // prompt_length == 0
};

PromptSet extract_prompts(std::span<const Document> corpus, const CorpusSpec& spec);

void save_corpus(const std::string& path, std::span<const Document> corpus);
std::vector<Document> load_corpus(const std::string& path);

/// Word lists of the built-in desk task.
std::vector<std::string> desk_neutral_words();
std::vector<std::string> desk_toxic_words();

}  // namespace alt

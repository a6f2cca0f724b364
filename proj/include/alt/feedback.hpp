#pragma once

// Turning (prompt, generation) pairs into feedback: the bag-of-words toxicity
// oracle, local reward quantiles, label schemes and their token encodings.

#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "alt/corpus.hpp"

namespace alt::feedback {

struct FeedbackLabel {
  std::string text;
  std::optional<int> category;  // 0 = best
  bool operator==(const FeedbackLabel&) const = default;
};

/// Parsed `<analysis>..</analysis><feedback>..</feedback><score>..</score>` reply.
struct UnconstrainedFeedback {
  std::string analysis;
  std::string feedback;
  int score = 0;  // 0..3, 3 = best
  bool operator==(const UnconstrainedFeedback&) const = default;
};

inline constexpr int kMaxUnconstrainedScore = 3;

/// Score classes are balanced like categories, best first.
inline int score_class(const UnconstrainedFeedback& f) { return kMaxUnconstrainedScore - f.score; }

using Feedback = std::variant<FeedbackLabel, UnconstrainedFeedback>;

/// Text placed in the feedback slot, and the category used for balancing.
std::string feedback_text(const Feedback& f);
std::optional<int> feedback_category(const Feedback& f);

enum class Encoding { textual, quantile_token, linearized };

std::string to_string(Encoding e);
Encoding encoding_from_string(const std::string& s);

struct QuantileScheme {
  std::string name;
  std::vector<FeedbackLabel> labels;  // best first; labels[i].category == i
  Encoding encoding = Encoding::textual;
  /// Textual feedback is rendered through this template; "{label}" is replaced.
  std::string prefix_template = "{label}";

  int k() const { return static_cast<int>(labels.size()); }
  void validate() const;
  nlohmann::json to_json() const;
  static QuantileScheme from_json(const nlohmann::json& j);
};

QuantileScheme make_scheme(std::string name, const std::vector<std::string>& labels_best_first,
                           Encoding encoding = Encoding::textual, std::string prefix_template = "{label}");

/// "Lowest Toxicity" .. "Maximum Toxicity".
QuantileScheme toxicity_scheme();
/// "nontoxic" .. "very toxic" (the alternate wording).
QuantileScheme toxicity_alt_scheme();
/// "Excellent" .. "Horrible", rendered as "<label> input:".
QuantileScheme summarization_scheme();
/// "Harmless and very helpful" .. "Harmful".
QuantileScheme dialogue_scheme();
QuantileScheme scheme_by_name(const std::string& name);
std::vector<std::string> scheme_names();

/// Every word the shipped schemes, their linearized forms, the summarization
/// template and the unconstrained-feedback fixtures need in the vocabulary.
std::vector<std::string> control_words();

/// Fraction of non-special tokens that belong to the toxic lexicon; 0 for an
/// empty generation. Reward convention: reward = 1 - toxicity.
double toxicity_score(const Vocabulary& vocab, std::span<const TokenId> generation);

/// Stable sort by reward (descending), then K contiguous groups whose sizes
/// differ by at most one, larger groups first. Returns each input's category.
std::vector<int> map_rewards_to_quantiles(std::span<const double> rewards, int k);

const FeedbackLabel& label_for_category(const QuantileScheme& scheme, int category);

/// Fixed dialogue-label to attribute-string mapping.
std::string steerlm_linearize(const FeedbackLabel& label);

/// The string whose tokens fill the feedback slot (textual / linearized).
std::string render_feedback(const Feedback& f, const QuantileScheme& scheme);
/// Feedback slot tokens: one quantile token, or the tokenized rendered string.
TokenSeq encode_feedback(const Feedback& f, const QuantileScheme& scheme, const Vocabulary& vocab);

}  // namespace alt::feedback

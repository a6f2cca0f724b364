#include "alt/feedback.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include "alt/errors.hpp"

namespace alt::feedback {

std::string feedback_text(const Feedback& f) {
  if (const auto* l = std::get_if<FeedbackLabel>(&f)) return l->text;
  return std::get<UnconstrainedFeedback>(f).feedback;
}

std::optional<int> feedback_category(const Feedback& f) {
  if (const auto* l = std::get_if<FeedbackLabel>(&f)) return l->category;
  return score_class(std::get<UnconstrainedFeedback>(f));
}

std::string to_string(Encoding e) {
  switch (e) {
    case Encoding::textual:
      return "textual";
    case Encoding::quantile_token:
      return "quantile_token";
    case Encoding::linearized:
      return "linearized";
  }
  return "textual";
}

Encoding encoding_from_string(const std::string& s) {
  if (s == "textual") return Encoding::textual;
  if (s == "quantile_token") return Encoding::quantile_token;
  if (s == "linearized") return Encoding::linearized;
  throw ValidationError("unknown feedback encoding '" + s + "' (textual, quantile_token, linearized)");
}

void QuantileScheme::validate() const {
  if (labels.empty()) throw ValidationError("scheme '" + name + "' has no labels");
  std::set<std::string> seen;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i].text.empty()) throw ValidationError("scheme '" + name + "' has an empty label");
    if (!seen.insert(labels[i].text).second) throw ValidationError("scheme '" + name + "' has duplicate labels");
    if (labels[i].category != static_cast<int>(i)) {
      throw ValidationError("scheme '" + name + "' label categories must be 0..K-1 in order");
    }
  }
  if (prefix_template.find("{label}") == std::string::npos) {
    throw ValidationError("scheme prefix_template must contain {label}");
  }
}

nlohmann::json QuantileScheme::to_json() const {
  nlohmann::json labels_json = nlohmann::json::array();
  for (const auto& l : labels) labels_json.push_back(l.text);
  return {{"name", name}, {"labels", labels_json}, {"encoding", to_string(encoding)}, {"prefix_template", prefix_template}};
}

QuantileScheme QuantileScheme::from_json(const nlohmann::json& j) {
  if (j.is_string()) return scheme_by_name(j.get<std::string>());
  auto s = make_scheme(j.value("name", std::string("custom")), j.at("labels").get<std::vector<std::string>>(),
                       encoding_from_string(j.value("encoding", std::string("textual"))),
                       j.value("prefix_template", std::string("{label}")));
  s.validate();
  return s;
}

QuantileScheme make_scheme(std::string name, const std::vector<std::string>& labels_best_first, Encoding encoding,
                           std::string prefix_template) {
  QuantileScheme s;
  s.name = std::move(name);
  s.encoding = encoding;
  s.prefix_template = std::move(prefix_template);
  for (std::size_t i = 0; i < labels_best_first.size(); ++i) {
    s.labels.push_back({labels_best_first[i], static_cast<int>(i)});
  }
  s.validate();
  return s;
}

QuantileScheme toxicity_scheme() {
  return make_scheme("toxicity", {"Lowest Toxicity", "Low-Moderate Toxicity", "Moderate Toxicity",
                                  "High-Moderate Toxicity", "Maximum Toxicity"});
}

QuantileScheme toxicity_alt_scheme() {
  return make_scheme("toxicity_alt", {"nontoxic", "slightly toxic", "medium toxic", "toxic", "very toxic"});
}

QuantileScheme summarization_scheme() {
  return make_scheme("summarization", {"Excellent", "Good", "Mediocre", "Bad", "Horrible"}, Encoding::textual,
                     "{label} input:");
}

QuantileScheme dialogue_scheme() {
  return make_scheme("dialogue",
                     {"Harmless and very helpful", "Harmless and helpful", "Harmless and not helpful", "Harmful"});
}

std::vector<std::string> scheme_names() { return {"toxicity", "toxicity_alt", "summarization", "dialogue"}; }

QuantileScheme scheme_by_name(const std::string& name) {
  if (name == "toxicity") return toxicity_scheme();
  if (name == "toxicity_alt") return toxicity_alt_scheme();
  if (name == "summarization") return summarization_scheme();
  if (name == "dialogue") return dialogue_scheme();
  throw ValidationError("unknown scheme '" + name + "'");
}

std::vector<std::string> control_words() {
  std::vector<std::string> out;
  std::set<std::string> seen;
  auto add_text = [&](const std::string& text) {
    std::string piece;
    auto flush = [&] {
      if (!piece.empty() && seen.insert(piece).second) out.push_back(piece);
      piece.clear();
    };
    for (const char c : text) {
      if (c == ' ') {
        flush();
      } else if (c == ',') {
        flush();
        piece = ",";
        flush();
      } else {
        piece.push_back(c);
      }
    }
    flush();
  };
  for (const auto& name : scheme_names()) {
    const auto s = scheme_by_name(name);
    for (const auto& l : s.labels) {
      add_text(render_feedback(l, s));
      if (name == "dialogue") add_text(steerlm_linearize(l));
    }
  }
  // Vocabulary for short unconstrained critiques.
  for (const char* w : {"Accurate", "accurate", "Concise", "concise", "Clear", "clear", "Vague", "vague", "Rude", "rude", "Polite", "polite", "Harsh", "harsh", "Gentle", "gentle", "Off-topic",
                        "and", "but", "too", "mostly", "very", "slightly", "not"}) {
    add_text(w);
  }
  return out;
}

double toxicity_score(const Vocabulary& vocab, std::span<const TokenId> generation) {
  std::size_t toxic = 0, counted = 0;
  for (const auto id : generation) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab.size()) {
      throw ValidationError("token id " + std::to_string(id) + " out of range");
    }
    if (vocab.is_special(id)) continue;
    ++counted;
    if (vocab.is_toxic(id)) ++toxic;
  }
  if (counted == 0) return 0.0;
  return static_cast<double>(toxic) / static_cast<double>(counted);
}

std::vector<int> map_rewards_to_quantiles(std::span<const double> rewards, int k) {
  if (k < 1) throw ValidationError("number of quantiles must be >= 1");
  if (rewards.empty()) throw ValidationError("map_rewards_to_quantiles needs at least one reward");
  for (const double r : rewards) {
    if (!std::isfinite(r)) throw ValidationError("rewards must be finite");
  }
  std::vector<std::size_t> order(rewards.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&rewards](std::size_t a, std::size_t b) { return rewards[a] > rewards[b]; });

  const std::size_t n = rewards.size();
  const std::size_t kk = static_cast<std::size_t>(k);
  const std::size_t base = n / kk;
  const std::size_t extra = n % kk;
  std::vector<int> category(n);
  std::size_t pos = 0;
  for (std::size_t g = 0; g < kk; ++g) {
    const std::size_t size = base + (g < extra ? 1 : 0);
    for (std::size_t i = 0; i < size; ++i) category[order[pos++]] = static_cast<int>(g);
  }
  return category;
}

const FeedbackLabel& label_for_category(const QuantileScheme& scheme, int category) {
  if (category < 0 || category >= scheme.k()) {
    throw ValidationError("category " + std::to_string(category) + " out of range for scheme '" + scheme.name + "'");
  }
  return scheme.labels[static_cast<std::size_t>(category)];
}

std::string steerlm_linearize(const FeedbackLabel& label) {
  if (label.text == "Harmless and very helpful") return "harmful:0,helpful:2";
  if (label.text == "Harmless and helpful") return "harmful:0,helpful:1";
  if (label.text == "Harmless and not helpful") return "harmful:0,helpful:0";
  if (label.text == "Harmful") return "harmful:1,helpful:0";
  throw ValidationError("'" + label.text + "' is not a dialogue label");
}

std::string render_feedback(const Feedback& f, const QuantileScheme& scheme) {
  if (scheme.encoding == Encoding::linearized) {
    const auto* label = std::get_if<FeedbackLabel>(&f);
    if (!label) throw ValidationError("linearized encoding needs a categorical label");
    return steerlm_linearize(*label);
  }
  std::string out = scheme.prefix_template;
  const auto pos = out.find("{label}");
  out.replace(pos, 7, feedback_text(f));
  return out;
}

TokenSeq encode_feedback(const Feedback& f, const QuantileScheme& scheme, const Vocabulary& vocab) {
  if (scheme.encoding == Encoding::quantile_token) {
    const auto cat = feedback_category(f);
    if (!cat) throw ValidationError("quantile-token encoding needs a category");
    if (*cat < 0 || *cat >= vocab.k_quantiles()) throw ValidationError("no quantile token for category");
    return {vocab.special().quantile[static_cast<std::size_t>(*cat)]};
  }
  return vocab.tokenize(render_feedback(f, scheme));
}

}  // namespace alt::feedback

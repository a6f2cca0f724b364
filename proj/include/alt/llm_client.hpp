#pragma once

// Chat-completion client used by the LLM feedback providers and the win-rate
// judge. Wire format: request {model, messages:[{role, content}], temperature},
// response {choices:[{message:{content}}]}.

#include <atomic>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "alt/feedback.hpp"

namespace alt::llm {

struct ClientConfig {
  std::string transport = "mock";  // "http" or "mock"
  std::string endpoint = "https://api.openai.com/v1/chat/completions";
  std::string model = "gpt-3.5-turbo";
  std::string api_key_env = "OPENAI_API_KEY";  // name of the variable, never the key
  double timeout_s = 30.0;
  int max_retries = 3;
  int retry_backoff_ms = 250;
  double temperature = 0.0;
  int concurrency = 4;
  std::string mock_fixture;  // used when transport == "mock"

  void validate() const;
  nlohmann::json to_json() const;
  static ClientConfig from_json(const nlohmann::json& j);
  static ClientConfig from_json(const nlohmann::json& j, ClientConfig defaults);
};

struct ChatMessage {
  std::string role;
  std::string content;
  bool operator==(const ChatMessage&) const = default;
};

struct ChatRequest {
  std::string model;
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  /// Slot values the request was rendered from. Not sent on the wire; the mock
  /// transport can match on them.
  std::map<std::string, std::string> slots;
};

nlohmann::json to_wire(const ChatRequest& request);
/// choices[0].message.content, or ExternalServiceError for a malformed body.
std::string content_from_wire(const nlohmann::json& response);

class Transport {
 public:
  virtual ~Transport() = default;
  /// Returns the assistant message content. Throws ExternalServiceError.
  virtual std::string complete(const ChatRequest& request) = 0;
};

class HttpTransport : public Transport {
 public:
  explicit HttpTransport(ClientConfig config);
  std::string complete(const ChatRequest& request) override;

 private:
  ClientConfig config_;
  std::string scheme_host_port_;
  std::string path_;
};

/// Replays canned responses from a fixture:
///   {"rules": [{"slot": "generation", "contains_any": [...], "min_matches": 1,
///               "response": "..."}],
///    "responses": ["...", ...],
///    "transient_failures": 0}
/// The first matching rule wins; otherwise a response is picked by a hash of
/// the wire request, so replies do not depend on call order.
class MockTransport : public Transport {
 public:
  explicit MockTransport(nlohmann::json fixture);
  static std::shared_ptr<MockTransport> from_file(const std::string& path);
  std::string complete(const ChatRequest& request) override;
  std::size_t calls() const { return calls_.load(); }

 private:
  nlohmann::json fixture_;
  std::atomic<std::size_t> calls_{0};
};

std::shared_ptr<Transport> make_transport(const ClientConfig& config);

/// Transport plus retry policy.
class ChatClient {
 public:
  ChatClient(ClientConfig config, std::shared_ptr<Transport> transport);
  explicit ChatClient(ClientConfig config) : ChatClient(config, make_transport(config)) {}

  std::string complete(const ChatRequest& request);
  const ClientConfig& config() const { return config_; }
  std::size_t retries() const { return retries_.load(); }

 private:
  ClientConfig config_;
  std::shared_ptr<Transport> transport_;
  std::atomic<std::size_t> retries_{0};
};

/// Versioned text template with {{slot}} placeholders. File layout:
///   optional leading '#' comment lines, then "[system]" and/or "[user]"
///   section headers each followed by that message's text.
struct PromptTemplate {
  std::string id;
  std::vector<ChatMessage> messages;

  static PromptTemplate parse(std::string id, std::string_view text);
  std::vector<std::string> slots() const;
  /// Every slot in the template must be provided.
  std::vector<ChatMessage> render(const std::map<std::string, std::string>& values) const;
};

std::string default_template_dir();
/// Loads `<dir>/<template_id>.txt`, e.g. "lmc_dialogue.v1".
PromptTemplate load_template(const std::string& template_id, const std::string& dir = default_template_dir());

/// Trim, collapse internal whitespace, lowercase.
std::string normalize_label(std::string_view text);

feedback::FeedbackLabel parse_categorical(std::string_view response, std::span<const feedback::FeedbackLabel> allowed);
feedback::UnconstrainedFeedback parse_unconstrained(std::string_view response);

feedback::FeedbackLabel llm_categorical(ChatClient& client, const PromptTemplate& tmpl, const std::string& prompt,
                                        const std::string& generation,
                                        std::span<const feedback::FeedbackLabel> allowed);
feedback::UnconstrainedFeedback llm_unconstrained(ChatClient& client, const PromptTemplate& tmpl,
                                                  const std::string& prompt, const std::string& generation);

}  // namespace alt::llm

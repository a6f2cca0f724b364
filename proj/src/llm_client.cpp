#include "alt/llm_client.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "alt/errors.hpp"

namespace alt::llm {

void ClientConfig::validate() const {
  if (transport != "http" && transport != "mock") throw ValidationError("client.transport must be 'http' or 'mock'");
  if (!(timeout_s > 0.0)) throw ValidationError("client.timeout_s must be > 0");
  if (max_retries < 0) throw ValidationError("client.max_retries must be >= 0");
  if (retry_backoff_ms < 0) throw ValidationError("client.retry_backoff_ms must be >= 0");
  if (concurrency < 1) throw ValidationError("client.concurrency must be >= 1");
  if (transport == "http" && endpoint.empty()) throw ValidationError("client.endpoint is required for http transport");
  if (transport == "mock" && mock_fixture.empty()) throw ValidationError("client.mock_fixture is required for mock transport");
}

nlohmann::json ClientConfig::to_json() const {
  return {{"transport", transport},     {"endpoint", endpoint},
          {"model", model},             {"api_key_env", api_key_env},
          {"timeout_s", timeout_s},     {"max_retries", max_retries},
          {"retry_backoff_ms", retry_backoff_ms}, {"temperature", temperature},
          {"concurrency", concurrency}, {"mock_fixture", mock_fixture}};
}

ClientConfig ClientConfig::from_json(const nlohmann::json& j) { return from_json(j, ClientConfig{}); }

ClientConfig ClientConfig::from_json(const nlohmann::json& j, ClientConfig d) {
  d.transport = j.value("transport", d.transport);
  d.endpoint = j.value("endpoint", d.endpoint);
  d.model = j.value("model", d.model);
  d.api_key_env = j.value("api_key_env", d.api_key_env);
  d.timeout_s = j.value("timeout_s", d.timeout_s);
  d.max_retries = j.value("max_retries", d.max_retries);
  d.retry_backoff_ms = j.value("retry_backoff_ms", d.retry_backoff_ms);
  d.temperature = j.value("temperature", d.temperature);
  d.concurrency = j.value("concurrency", d.concurrency);
  d.mock_fixture = j.value("mock_fixture", d.mock_fixture);
  return d;
}

nlohmann::json to_wire(const ChatRequest& request) {
  nlohmann::json messages = nlohmann::json::array();
  for (const auto& m : request.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
  return {{"model", request.model}, {"messages", messages}, {"temperature", request.temperature}};
}

std::string content_from_wire(const nlohmann::json& response) {
  try {
    return response.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ExternalServiceError(std::string("malformed chat-completion response: ") + e.what());
  }
}

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (const char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

}  // namespace

MockTransport::MockTransport(nlohmann::json fixture) : fixture_(std::move(fixture)) {
  if (!fixture_.contains("responses") || !fixture_["responses"].is_array() || fixture_["responses"].empty()) {
    throw ValidationError("mock fixture needs a non-empty 'responses' array");
  }
}

std::shared_ptr<MockTransport> MockTransport::from_file(const std::string& name) {
  // Relative fixture paths that do not exist from the working directory are
  // looked up in the source tree, so shipped profiles work from any directory.
  std::string path = name;
  if (!path.empty() && path.front() != '/' && !std::ifstream(path)) path = std::string(ALT_SOURCE_DIR) + "/" + path;
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read mock fixture " + path);
  return std::make_shared<MockTransport>(nlohmann::json::parse(in));
}

std::string MockTransport::complete(const ChatRequest& request) {
  const auto call = calls_.fetch_add(1);
  if (call < fixture_.value("transient_failures", std::size_t{0})) {
    throw ExternalServiceError("mock transient failure");
  }
  for (const auto& rule : fixture_.value("rules", nlohmann::json::array())) {
    const auto slot = rule.value("slot", std::string{});
    std::string haystack;
    if (slot.empty()) {
      haystack = request.messages.empty() ? std::string{} : request.messages.back().content;
    } else if (const auto it = request.slots.find(slot); it != request.slots.end()) {
      haystack = it->second;
    }
    const auto needles = rule.value("contains_any", std::vector<std::string>{});
    const auto min_matches = rule.value("min_matches", 1);
    int matches = 0;
    for (const auto& w : split_words(haystack)) {
      if (std::find(needles.begin(), needles.end(), w) != needles.end()) ++matches;
    }
    if (matches >= min_matches) return rule.at("response").get<std::string>();
  }
  const auto& responses = fixture_["responses"];
  const auto pick = fnv1a(to_wire(request).dump()) % responses.size();
  return responses[pick].get<std::string>();
}

std::shared_ptr<Transport> make_transport(const ClientConfig& config) {
  config.validate();
  if (config.transport == "mock") return MockTransport::from_file(config.mock_fixture);
  return std::make_shared<HttpTransport>(config);
}

ChatClient::ChatClient(ClientConfig config, std::shared_ptr<Transport> transport)
    : config_(std::move(config)), transport_(std::move(transport)) {
  if (!transport_) throw ValidationError("chat client needs a transport");
}

std::string ChatClient::complete(const ChatRequest& request) {
  std::string last_error;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      retries_.fetch_add(1);
      std::this_thread::sleep_for(std::chrono::milliseconds(config_.retry_backoff_ms * (1 << std::min(attempt - 1, 6))));
    }
    try {
      return transport_->complete(request);
    } catch (const ExternalServiceError& e) {
      last_error = e.what();
    }
  }
  throw ExternalServiceError("chat completion failed after " + std::to_string(config_.max_retries + 1) +
                             " attempts: " + last_error);
}

PromptTemplate PromptTemplate::parse(std::string id, std::string_view text) {
  PromptTemplate t;
  t.id = std::move(id);
  std::istringstream in{std::string(text)};
  std::string line;
  ChatMessage* current = nullptr;
  bool header = true;
  while (std::getline(in, line)) {
    if (header && (line.empty() || line[0] == '#')) continue;
    header = false;
    if (line == "[system]" || line == "[user]" || line == "[assistant]") {
      t.messages.push_back({line.substr(1, line.size() - 2), ""});
      current = &t.messages.back();
      continue;
    }
    if (!current) throw ValidationError("template '" + t.id + "' has text before the first [role] header");
    if (!current->content.empty()) current->content.push_back('\n');
    current->content += line;
  }
  for (auto& m : t.messages) m.content = trim(m.content);
  if (t.messages.empty()) throw ValidationError("template '" + t.id + "' has no messages");
  return t;
}

std::vector<std::string> PromptTemplate::slots() const {
  std::set<std::string> found;
  for (const auto& m : messages) {
    std::size_t pos = 0;
    while ((pos = m.content.find("{{", pos)) != std::string::npos) {
      const auto end = m.content.find("}}", pos);
      if (end == std::string::npos) break;
      found.insert(m.content.substr(pos + 2, end - pos - 2));
      pos = end + 2;
    }
  }
  return {found.begin(), found.end()};
}

std::vector<ChatMessage> PromptTemplate::render(const std::map<std::string, std::string>& values) const {
  std::vector<ChatMessage> out;
  for (const auto& m : messages) {
    std::string text;
    std::size_t pos = 0;
    while (true) {
      const auto open = m.content.find("{{", pos);
      if (open == std::string::npos) {
        text += m.content.substr(pos);
        break;
      }
      const auto close = m.content.find("}}", open);
      if (close == std::string::npos) throw ValidationError("template '" + id + "' has an unterminated slot");
      text += m.content.substr(pos, open - pos);
      const auto name = m.content.substr(open + 2, close - open - 2);
      const auto it = values.find(name);
      if (it == values.end()) throw ValidationError("template '" + id + "' slot '" + name + "' was not provided");
      text += it->second;
      pos = close + 2;
    }
    out.push_back({m.role, std::move(text)});
  }
  return out;
}

std::string default_template_dir() { return std::string(ALT_SOURCE_DIR) + "/templates"; }

PromptTemplate load_template(const std::string& template_id, const std::string& dir) {
  const auto path = dir + "/" + template_id + ".txt";
  std::ifstream in(path);
  if (!in) throw ValidationError("unknown prompt template '" + template_id + "' (looked for " + path + ")");
  std::stringstream ss;
  ss << in.rdbuf();
  return PromptTemplate::parse(template_id, ss.str());
}

std::string normalize_label(std::string_view text) {
  std::string out;
  for (const auto& w : split_words(text)) {
    if (!out.empty()) out.push_back(' ');
    for (const char c : w) out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

feedback::FeedbackLabel parse_categorical(std::string_view response, std::span<const feedback::FeedbackLabel> allowed) {
  if (allowed.empty()) throw ValidationError("categorical feedback needs a non-empty allowed label set");
  const auto norm = normalize_label(response);
  for (const auto& label : allowed) {
    if (normalize_label(label.text) == norm) return label;
  }
  throw UnparseableResponse("response '" + std::string(response) + "' matches no allowed label");
}

namespace {

std::string tag_content(std::string_view text, const std::string& tag) {
  const std::string open = "<" + tag + ">";
  const std::string close = "</" + tag + ">";
  const auto b = text.find(open);
  if (b == std::string_view::npos) throw UnparseableResponse("missing " + open);
  const auto e = text.find(close, b + open.size());
  if (e == std::string_view::npos) throw UnparseableResponse("missing " + close);
  return trim(text.substr(b + open.size(), e - b - open.size()));
}

}  // namespace

feedback::UnconstrainedFeedback parse_unconstrained(std::string_view response) {
  feedback::UnconstrainedFeedback out;
  out.analysis = tag_content(response, "analysis");
  out.feedback = tag_content(response, "feedback");
  const auto score = tag_content(response, "score");
  if (out.feedback.empty()) throw UnparseableResponse("empty <feedback>");
  if (score.size() != 1 || score[0] < '0' || score[0] > '0' + feedback::kMaxUnconstrainedScore) {
    throw UnparseableResponse("score '" + score + "' is not an integer in 0..3");
  }
  out.score = score[0] - '0';
  return out;
}

namespace {

ChatRequest build_request(const ChatClient& client, const PromptTemplate& tmpl,
                          std::map<std::string, std::string> slots) {
  ChatRequest req;
  req.model = client.config().model;
  req.temperature = client.config().temperature;
  req.messages = tmpl.render(slots);
  req.slots = std::move(slots);
  return req;
}

}  // namespace

feedback::FeedbackLabel llm_categorical(ChatClient& client, const PromptTemplate& tmpl, const std::string& prompt,
                                        const std::string& generation,
                                        std::span<const feedback::FeedbackLabel> allowed) {
  if (allowed.empty()) throw ValidationError("categorical feedback needs a non-empty allowed label set");
  const auto req = build_request(client, tmpl, {{"prompt", prompt}, {"generation", generation}});
  return parse_categorical(client.complete(req), allowed);
}

feedback::UnconstrainedFeedback llm_unconstrained(ChatClient& client, const PromptTemplate& tmpl,
                                                  const std::string& prompt, const std::string& generation) {
  const auto req = build_request(client, tmpl, {{"prompt", prompt}, {"generation", generation}});
  return parse_unconstrained(client.complete(req));
}

}  // namespace alt::llm

#include <cstdlib>

#include <httplib.h>

#include "alt/errors.hpp"
#include "alt/llm_client.hpp"

namespace alt::llm {

HttpTransport::HttpTransport(ClientConfig config) : config_(std::move(config)) {
  const auto& url = config_.endpoint;
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ValidationError("client.endpoint must be an absolute URL: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  scheme_host_port_ = url.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : url.substr(path_start);
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
  if (url.rfind("https://", 0) == 0) throw ValidationError("https endpoints need a build with OpenSSL");
#endif
}

std::string HttpTransport::complete(const ChatRequest& request) {
  httplib::Client client(scheme_host_port_);
  const auto secs = static_cast<time_t>(config_.timeout_s);
  const auto usecs = static_cast<time_t>((config_.timeout_s - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);

  httplib::Headers headers;
  if (!config_.api_key_env.empty()) {
    if (const char* key = std::getenv(config_.api_key_env.c_str()); key != nullptr && *key != '\0') {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
  }
  const auto res = client.Post(path_, headers, to_wire(request).dump(), "application/json");
  if (!res) throw ExternalServiceError("HTTP request failed: " + httplib::to_string(res.error()));
  if (res->status < 200 || res->status >= 300) {
    throw ExternalServiceError("HTTP status " + std::to_string(res->status));
  }
  nlohmann::json body;
  try {
    body = nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception&) {
    throw ExternalServiceError("response body is not JSON");
  }
  return content_from_wire(body);
}

}  // namespace alt::llm

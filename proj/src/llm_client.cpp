#include "comt/llm_client.hpp"

#include <cstdlib>
#include <thread>

#include "comt/errors.hpp"
#include "comt/jsonl.hpp"
#include "httplib.h"

namespace comt {

ParsedUrl parse_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ValidationError("endpoint URL lacks a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

std::string post_json_with_retry(const EndpointConfig& config, const std::string& body) {
  const auto target = parse_url(config.url);
  httplib::Headers headers;
  if (!config.api_key_env.empty()) {
    if (const char* key = std::getenv(config.api_key_env.c_str()); key && *key)
      headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  const int attempts = 1 + std::max(0, config.retries);
  auto delay = config.backoff;
  std::string last_error;
  for (int attempt = 0; attempt < attempts; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(delay);
      delay *= 2;
    }
    httplib::Client client(target.origin);
    const auto secs = config.timeout.count() / 1000;
    const auto usecs = (config.timeout.count() % 1000) * 1000;
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);
    auto res = client.Post(target.path, headers, body, "application/json");
    if (!res) {
      last_error = "request to " + config.url + " failed: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 200 && res->status < 300) return res->body;
    last_error = "endpoint " + config.url + " returned HTTP " + std::to_string(res->status);
    if (res->status != 429 && res->status < 500) throw Error(last_error + ": " + res->body);
  }
  throw RetriableBackendError(last_error + " (after " + std::to_string(attempts) + " attempts)");
}

HttpCompletionClient::HttpCompletionClient(EndpointConfig config) : config_(std::move(config)) {}

std::string HttpCompletionClient::complete(const std::string& prompt) {
  Json req{{"model", config_.model}, {"prompt", prompt}, {"temperature", config_.temperature}};
  const auto body = post_json_with_retry(config_, req.dump());
  const auto parsed = Json::parse(body, nullptr, false);
  if (parsed.is_discarded() || !parsed.is_object()) return body;
  if (auto it = parsed.find("text"); it != parsed.end() && it->is_string()) return it->get<std::string>();
  if (auto it = parsed.find("choices"); it != parsed.end() && it->is_array() && !it->empty()) {
    const auto& c = it->front();
    if (c.contains("text") && c["text"].is_string()) return c["text"].get<std::string>();
    if (c.contains("message") && c["message"].contains("content") && c["message"]["content"].is_string())
      return c["message"]["content"].get<std::string>();
  }
  return body;
}

}  // namespace comt

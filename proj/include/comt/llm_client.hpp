#pragma once

#include <chrono>
#include <functional>
#include <string>

namespace comt {

/// A text-in/text-out model endpoint. Implementations throw
/// RetriableBackendError for transient failures.
class CompletionClient {
 public:
  virtual ~CompletionClient() = default;
  virtual std::string complete(const std::string& prompt) = 0;
  virtual std::string id() const = 0;
};

/// Remote endpoint settings shared by the segmentation, rephrase, judge and
/// embedding backends. Credentials are read from the environment variable
/// named by `api_key_env`, never from flags or files.
struct EndpointConfig {
  std::string url;  // e.g. http://127.0.0.1:8080/v1/complete
  std::string model;
  std::string api_key_env;
  std::chrono::milliseconds timeout{30000};
  int retries = 3;
  std::chrono::milliseconds backoff{500};
  double temperature = 0.0;
};

/// POSTs `{"model", "prompt", "temperature"}` as JSON. Accepts a JSON
/// response carrying `text`, `choices[0].text` or
/// `choices[0].message.content`; any other body is taken verbatim.
///
/// Timeouts, connection failures, 429 and 5xx are retried with exponential
/// backoff; other 4xx fail immediately.
class HttpCompletionClient : public CompletionClient {
 public:
  explicit HttpCompletionClient(EndpointConfig config);
  std::string complete(const std::string& prompt) override;
  std::string id() const override { return config_.model.empty() ? config_.url : config_.model; }
  const EndpointConfig& config() const noexcept { return config_; }

 private:
  EndpointConfig config_;
};

/// Adapter for tests and offline runs.
class FunctionCompletionClient : public CompletionClient {
 public:
  FunctionCompletionClient(std::string id, std::function<std::string(const std::string&)> fn)
      : id_(std::move(id)), fn_(std::move(fn)) {}
  std::string complete(const std::string& prompt) override { return fn_(prompt); }
  std::string id() const override { return id_; }

 private:
  std::string id_;
  std::function<std::string(const std::string&)> fn_;
};

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;    // begins with '/'
};

ParsedUrl parse_url(const std::string& url);

/// POST a JSON body with retry/backoff per `config`; returns the response body.
std::string post_json_with_retry(const EndpointConfig& config, const std::string& body);

}  // namespace comt

#pragma once

#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "pertforge/backend/backend.hpp"

namespace pertforge::backend {

struct RetryPolicy {
  int max_attempts = 3;
  int initial_backoff_ms = 1000;  // doubles per attempt
};

struct HttpBackendConfig {
  std::string base_url;  // e.g. "https://api.openai.com/v1"
  std::string model;
  std::string embedding_model = "text-embedding-3-small";
  std::string api_key;  // usually from PERTFORGE_API_KEY
  RetryPolicy retry;
  int max_in_flight = 4;
  int timeout_s = 120;
};

/// Request bodies are built through these so the serialization is bit-exact
/// across identical requests (keys are emitted in sorted order).
nlohmann::json chat_request_body(const std::string& model, const CompletionRequest& request);
nlohmann::json embeddings_request_body(const std::string& model,
                                       const std::vector<std::string>& texts);

/// OpenAI-compatible gateway: POST {base_url}/chat/completions and
/// {base_url}/embeddings. Transient failures (connection errors, 408/429/5xx)
/// are retried with exponential backoff up to retry.max_attempts; a bounded
/// number of requests are in flight at once.
class HttpBackend : public Backend {
 public:
  explicit HttpBackend(HttpBackendConfig config);
  ~HttpBackend() override;

  HttpBackend(const HttpBackend&) = delete;
  HttpBackend& operator=(const HttpBackend&) = delete;

  CompletionResult complete(const CompletionRequest& request) override;
  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace pertforge::backend

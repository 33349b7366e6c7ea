#include "pertforge/backend/http_backend.hpp"

#include <chrono>
#include <cmath>
#include <semaphore>
#include <thread>

#include <httplib.h>

#include "pertforge/error.hpp"

namespace pertforge::backend {

namespace {

bool retryable_status(int status) {
  return status == 408 || status == 429 || status >= 500;
}

void l2_normalize(std::vector<double>& v) {
  double norm = 0.0;
  for (double x : v) norm += x * x;
  if (norm > 0.0) {
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
  }
}

}  // namespace

nlohmann::json chat_request_body(const std::string& model, const CompletionRequest& request) {
  nlohmann::json messages = nlohmann::json::array();
  if (request.system_text) {
    messages.push_back({{"role", "system"}, {"content", *request.system_text}});
  }
  messages.push_back({{"role", "user"}, {"content", request.user_text}});
  return nlohmann::json{{"model", model},
                        {"messages", std::move(messages)},
                        {"temperature", request.temperature},
                        {"top_p", request.top_p},
                        {"max_tokens", request.max_output_tokens}};
}

nlohmann::json embeddings_request_body(const std::string& model,
                                       const std::vector<std::string>& texts) {
  return nlohmann::json{{"model", model}, {"input", texts}};
}

struct HttpBackend::Impl {
  HttpBackendConfig config;
  std::string path_prefix;
  httplib::Client client;
  std::counting_semaphore<1024> in_flight;

  explicit Impl(HttpBackendConfig cfg, std::string host_part, std::string prefix)
      : config(std::move(cfg)),
        path_prefix(std::move(prefix)),
        client(host_part),
        in_flight(std::max(1, config.max_in_flight)) {
    client.set_connection_timeout(config.timeout_s, 0);
    client.set_read_timeout(config.timeout_s, 0);
    client.set_write_timeout(config.timeout_s, 0);
  }

  httplib::Headers headers() const {
    httplib::Headers h;
    if (!config.api_key.empty()) {
      h.emplace("Authorization", "Bearer " + config.api_key);
    }
    return h;
  }

  // POST with retry; returns the successful response body.
  std::string post(const std::string& path, const std::string& body) {
    const std::string endpoint = config.base_url + path;
    std::string last_error;
    const int attempts = std::max(1, config.retry.max_attempts);
    for (int attempt = 1; attempt <= attempts; ++attempt) {
      if (attempt > 1) {
        const auto delay = std::chrono::milliseconds(
            static_cast<long>(config.retry.initial_backoff_ms) * (1L << (attempt - 2)));
        std::this_thread::sleep_for(delay);
      }
      auto res = client.Post(path_prefix + path, headers(), body, "application/json");
      if (!res) {
        last_error = "connection error (" + httplib::to_string(res.error()) + ")";
        continue;
      }
      if (res->status == 200) {
        return res->body;
      }
      last_error = "HTTP " + std::to_string(res->status);
      if (!retryable_status(res->status)) {
        throw TransportError("request to " + endpoint + " failed with " + last_error +
                             " after " + std::to_string(attempt) + " attempt(s)");
      }
    }
    throw TransportError("request to " + endpoint + " failed after " +
                         std::to_string(attempts) + " attempt(s): " + last_error);
  }
};

HttpBackend::HttpBackend(HttpBackendConfig config) {
  std::string url = config.base_url;
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw ValidationError("backend base_url must include a scheme: " + url);
  }
  const auto path_start = url.find('/', scheme_end + 3);
  std::string host_part = path_start == std::string::npos ? url : url.substr(0, path_start);
  std::string prefix = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  impl_ = std::make_unique<Impl>(std::move(config), std::move(host_part), std::move(prefix));
}

HttpBackend::~HttpBackend() = default;

CompletionResult HttpBackend::complete(const CompletionRequest& request) {
  validate(request);
  impl_->in_flight.acquire();
  struct Release {
    std::counting_semaphore<1024>& sem;
    ~Release() { sem.release(); }
  } release{impl_->in_flight};

  const std::string body = chat_request_body(impl_->config.model, request).dump();
  const std::string response = impl_->post("/chat/completions", body);

  nlohmann::json j;
  try {
    j = nlohmann::json::parse(response);
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("chat completion: response is not JSON: ") + e.what());
  }
  CompletionResult result;
  result.source = CompletionResult::Source::live;
  try {
    result.text = j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception&) {
    throw ProtocolError("chat completion: missing choices[0].message.content");
  }
  std::optional<long> prompt_usage, completion_usage;
  if (j.contains("usage")) {
    const auto& u = j.at("usage");
    if (u.contains("prompt_tokens")) prompt_usage = u.at("prompt_tokens").get<long>();
    if (u.contains("completion_tokens")) completion_usage = u.at("completion_tokens").get<long>();
  }
  result.prompt_tokens = count_tokens(request.system_text.value_or("") + request.user_text,
                                      prompt_usage);
  result.completion_tokens = count_tokens(result.text, completion_usage);
  return result;
}

std::vector<std::vector<double>> HttpBackend::embed(const std::vector<std::string>& texts) {
  if (texts.empty()) {
    throw ValidationError("embed: empty batch");
  }
  impl_->in_flight.acquire();
  struct Release {
    std::counting_semaphore<1024>& sem;
    ~Release() { sem.release(); }
  } release{impl_->in_flight};

  const std::string body =
      embeddings_request_body(impl_->config.embedding_model, texts).dump();
  const std::string response = impl_->post("/embeddings", body);

  nlohmann::json j;
  try {
    j = nlohmann::json::parse(response);
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("embeddings: response is not JSON: ") + e.what());
  }
  std::vector<std::vector<double>> out(texts.size());
  std::size_t filled = 0;
  try {
    const auto& data = j.at("data");
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto& item = data.at(i);
      const std::size_t index = item.contains("index") ? item.at("index").get<std::size_t>() : i;
      if (index >= out.size()) {
        throw ProtocolError("embeddings: index out of range");
      }
      out[index] = item.at("embedding").get<std::vector<double>>();
      ++filled;
    }
  } catch (const nlohmann::json::exception&) {
    throw ProtocolError("embeddings: malformed data array");
  }
  if (filled != texts.size()) {
    throw ProtocolError("embeddings: expected " + std::to_string(texts.size()) +
                        " vectors, got " + std::to_string(filled));
  }
  for (auto& v : out) l2_normalize(v);
  return out;
}

}  // namespace pertforge::backend

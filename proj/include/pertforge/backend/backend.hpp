#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pertforge/metrics/similarity.hpp"

namespace pertforge::backend {

/// One chat-style generation request. `seed` only steers the mock backend;
/// the live gateway ignores it.
struct CompletionRequest {
  std::optional<std::string> system_text;
  std::string user_text;
  double temperature = 0.0;
  double top_p = 1.0;
  int max_output_tokens = 1024;
  std::optional<std::uint64_t> seed;
};

/// temperature >= 0, top_p in (0,1], max_output_tokens > 0.
void validate(const CompletionRequest& request);

struct CompletionResult {
  enum class Source { live, mock };

  std::string text;
  long prompt_tokens = 0;
  long completion_tokens = 0;
  Source source = Source::mock;
};

/// Reported usage wins; otherwise ceil(scalar-count / 4).
long count_tokens(std::string_view text, std::optional<long> reported_usage = std::nullopt);

/// Model access: chat completions plus embeddings (the Embedder side).
class Backend : public metrics::Embedder {
 public:
  virtual CompletionResult complete(const CompletionRequest& request) = 0;
};

/// Token accounting split by phase and iteration. total() is always the sum
/// of every recorded count; thread-safe for concurrent recording.
class CostLedger {
 public:
  enum class Phase { perturb, optimize };

  CostLedger() = default;
  CostLedger(const CostLedger& other);
  CostLedger& operator=(const CostLedger& other);

  void record(Phase phase, int iteration, long tokens);
  long total() const;
  long phase_total(Phase phase) const;
  long at(Phase phase, int iteration) const;
  /// Iterations seen in either phase, ascending.
  std::vector<int> iterations() const;

  nlohmann::json to_json() const;
  static CostLedger from_json(const nlohmann::json& j);

  /// Token count in millions, "0.0258M" style.
  static std::string format_m(long tokens);
  /// One line: "total = Σ(A_i + O_i) = <perturb>M + <optimize>M = <total>M".
  std::string summary_line() const;

 private:
  mutable std::mutex mutex_;
  std::map<int, long> perturb_;
  std::map<int, long> optimize_;
};

std::string_view to_string(CostLedger::Phase phase);

/// Wraps a backend so every completion is recorded in the ledger under the
/// current (phase, iteration) scope. Embedding calls return no completion
/// usage and are not metered.
class MeteredBackend : public Backend {
 public:
  MeteredBackend(Backend& inner, CostLedger& ledger)
      : inner_(inner), ledger_(ledger) {}

  void set_scope(CostLedger::Phase phase, int iteration);

  CompletionResult complete(const CompletionRequest& request) override;
  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override;

 private:
  Backend& inner_;
  CostLedger& ledger_;
  std::mutex scope_mutex_;
  CostLedger::Phase phase_ = CostLedger::Phase::perturb;
  int iteration_ = 0;
};

}  // namespace pertforge::backend

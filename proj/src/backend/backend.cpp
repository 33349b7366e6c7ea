#include "pertforge/backend/backend.hpp"

#include <cmath>
#include <cstdio>

#include "pertforge/error.hpp"
#include "pertforge/util/text.hpp"

namespace pertforge::backend {

void validate(const CompletionRequest& request) {
  if (request.temperature < 0.0) {
    throw ValidationError("completion request: temperature must be >= 0");
  }
  if (request.top_p <= 0.0 || request.top_p > 1.0) {
    throw ValidationError("completion request: top_p must be in (0,1]");
  }
  if (request.max_output_tokens <= 0) {
    throw ValidationError("completion request: max_output_tokens must be positive");
  }
}

long count_tokens(std::string_view text, std::optional<long> reported_usage) {
  if (reported_usage.has_value()) return *reported_usage;
  const std::size_t scalars = text::to_codepoints(text).size();
  return static_cast<long>((scalars + 3) / 4);
}

std::string_view to_string(CostLedger::Phase phase) {
  return phase == CostLedger::Phase::perturb ? "perturb" : "optimize";
}

CostLedger::CostLedger(const CostLedger& other) {
  std::lock_guard lock(other.mutex_);
  perturb_ = other.perturb_;
  optimize_ = other.optimize_;
}

CostLedger& CostLedger::operator=(const CostLedger& other) {
  if (this == &other) return *this;
  std::scoped_lock lock(mutex_, other.mutex_);
  perturb_ = other.perturb_;
  optimize_ = other.optimize_;
  return *this;
}

void CostLedger::record(Phase phase, int iteration, long tokens) {
  std::lock_guard lock(mutex_);
  auto& bucket = phase == Phase::perturb ? perturb_ : optimize_;
  bucket[iteration] += tokens;
}

long CostLedger::total() const {
  std::lock_guard lock(mutex_);
  long sum = 0;
  for (const auto& [_, v] : perturb_) sum += v;
  for (const auto& [_, v] : optimize_) sum += v;
  return sum;
}

long CostLedger::phase_total(Phase phase) const {
  std::lock_guard lock(mutex_);
  const auto& bucket = phase == Phase::perturb ? perturb_ : optimize_;
  long sum = 0;
  for (const auto& [_, v] : bucket) sum += v;
  return sum;
}

long CostLedger::at(Phase phase, int iteration) const {
  std::lock_guard lock(mutex_);
  const auto& bucket = phase == Phase::perturb ? perturb_ : optimize_;
  const auto it = bucket.find(iteration);
  return it == bucket.end() ? 0 : it->second;
}

std::vector<int> CostLedger::iterations() const {
  std::lock_guard lock(mutex_);
  std::map<int, bool> seen;
  for (const auto& [i, _] : perturb_) seen[i] = true;
  for (const auto& [i, _] : optimize_) seen[i] = true;
  std::vector<int> out;
  out.reserve(seen.size());
  for (const auto& [i, _] : seen) out.push_back(i);
  return out;
}

nlohmann::json CostLedger::to_json() const {
  std::lock_guard lock(mutex_);
  nlohmann::json perturb = nlohmann::json::object();
  nlohmann::json optimize = nlohmann::json::object();
  long total = 0;
  for (const auto& [i, v] : perturb_) {
    perturb[std::to_string(i)] = v;
    total += v;
  }
  for (const auto& [i, v] : optimize_) {
    optimize[std::to_string(i)] = v;
    total += v;
  }
  return nlohmann::json{{"version", 1},
                        {"phases", {{"perturb", perturb}, {"optimize", optimize}}},
                        {"total", total}};
}

CostLedger CostLedger::from_json(const nlohmann::json& j) {
  CostLedger ledger;
  for (const auto& [key, value] : j.at("phases").at("perturb").items()) {
    ledger.perturb_[std::stoi(key)] = value.get<long>();
  }
  for (const auto& [key, value] : j.at("phases").at("optimize").items()) {
    ledger.optimize_[std::stoi(key)] = value.get<long>();
  }
  return ledger;
}

std::string CostLedger::format_m(long tokens) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4fM", static_cast<double>(tokens) / 1e6);
  return buf;
}

std::string CostLedger::summary_line() const {
  const long a = phase_total(Phase::perturb);
  const long o = phase_total(Phase::optimize);
  return "total = Σ(A_i + O_i) = " + format_m(a) + " + " + format_m(o) + " = " +
         format_m(a + o);
}

void MeteredBackend::set_scope(CostLedger::Phase phase, int iteration) {
  std::lock_guard lock(scope_mutex_);
  phase_ = phase;
  iteration_ = iteration;
}

CompletionResult MeteredBackend::complete(const CompletionRequest& request) {
  const CompletionResult result = inner_.complete(request);
  CostLedger::Phase phase;
  int iteration;
  {
    std::lock_guard lock(scope_mutex_);
    phase = phase_;
    iteration = iteration_;
  }
  ledger_.record(phase, iteration, result.prompt_tokens + result.completion_tokens);
  return result;
}

std::vector<std::vector<double>> MeteredBackend::embed(const std::vector<std::string>& texts) {
  return inner_.embed(texts);
}

}  // namespace pertforge::backend

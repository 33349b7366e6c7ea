#pragma once

#include <filesystem>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include <json.hpp>

#include "pertforge/backend/backend.hpp"

namespace pertforge::backend {

/// Deterministic text rewrites applied to a rule's templated response.
/// The seeded kinds pick position(s) from the request seed, so the same
/// (script, request, seed) always produces the same output.
struct MockTransform {
  enum class Kind {
    none,
    uppercase,
    lowercase,
    typo,       // bump one letter to the next letter, seeded position
    char_swap,  // swap one adjacent pair, seeded position
    drop_word,  // remove one whitespace token, seeded position
    append,     // arg_a appended
    prepend,    // arg_a prepended
    replace     // all occurrences of arg_a become arg_b
  };

  Kind kind = Kind::none;
  std::string arg_a;
  std::string arg_b;
};

/// One scripted behavior: if the request matches the patterns, answer with
/// responses[seed % responses.size()], expanded and transformed.
///
/// Templates may reference {user}, {system}, {seed}, and regex capture
/// groups {u0}..{u9} / {s0}..{s9} from the user/system patterns.
struct MockRule {
  std::string name;
  std::optional<std::string> system_pattern;
  std::optional<std::string> user_pattern;
  std::vector<std::string> responses;
  MockTransform transform;
};

/// Scriptable stand-in for a live model. A pure function of
/// (script, request, seed); embeddings use the term-frequency fallback.
class MockBackend : public Backend {
 public:
  explicit MockBackend(std::vector<MockRule> rules,
                       std::optional<std::string> default_response = std::nullopt);

  /// Loads the JSON script format (see docs/mock-script in README).
  /// Requires "version": 1.
  static MockBackend from_script(const nlohmann::json& script);
  static MockBackend from_script_file(const std::filesystem::path& path);

  CompletionResult complete(const CompletionRequest& request) override;
  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override;

  static std::string apply_transform(const MockTransform& t, std::string text,
                                     std::uint64_t seed);

 private:
  struct CompiledRule {
    MockRule rule;
    std::optional<std::regex> system_re;
    std::optional<std::regex> user_re;
  };

  std::vector<CompiledRule> rules_;
  std::optional<std::string> default_response_;
  metrics::TfEmbedder tf_;
};

}  // namespace pertforge::backend

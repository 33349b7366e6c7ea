#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "pertforge/backend/mock_backend.hpp"

namespace test_support {

inline std::filesystem::path data_dir() {
#ifdef PERTFORGE_DATA_DIR
  return std::filesystem::path(PERTFORGE_DATA_DIR);
#else
  return std::filesystem::path("data");
#endif
}

class TempDir {
 public:
  TempDir() {
    auto pattern =
        (std::filesystem::temp_directory_path() / "pertforge-test-XXXXXX").string();
    if (::mkdtemp(pattern.data()) == nullptr) {
      throw std::runtime_error("mkdtemp failed");
    }
    path_ = pattern;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::filesystem::path write_file(const std::filesystem::path& path,
                                        const std::string& content) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << content;
  return path;
}

// --- shared mock rule builders -------------------------------------------

// The request markers these patterns key on come from the default library
// templates.
inline nlohmann::json perturb_rule(const std::string& transform_kind,
                                   const std::string& transform_text = "") {
  nlohmann::json transform{{"kind", transform_kind}};
  if (!transform_text.empty()) transform["text"] = transform_text;
  return {{"name", "perturb"},
          {"match", {{"user", "Text:\\n([\\s\\S]+)\\n\\nReply with only the rewritten text\\."}}},
          {"responses", {"{u1}"}},
          {"transform", transform}};
}

inline nlohmann::json diff_rule() {
  return {{"name", "diff"},
          {"match", {{"user", "Differences:"}}},
          {"responses", {"a few characters were altered (typo-style noise)"}}};
}

inline nlohmann::json gradient_rule() {
  return {{"name", "gradient"},
          {"match", {{"user", "Reply with only the guidance\\."}}},
          {"responses",
           {"state that inputs may carry small corruptions and the answer format must not "
            "change"}}};
}

inline nlohmann::json propose_rule(std::vector<std::string> responses) {
  return {{"name", "propose"},
          {"match", {{"user", "Observed input corruptions:"}}},
          {"responses", std::move(responses)}};
}

inline nlohmann::json paraphrase_rule() {
  return {{"name", "paraphrase"},
          {"match", {{"user", "Instruction:\\n([\\s\\S]+)\\n\\nRewritten instruction:"}}},
          {"responses", {"{u1} Reworded.", "Reworded: {u1}"}}};
}

// Synthetic optimum: score is 1.0 iff the prompt contains "ROBUST"; the
// proposal pool injects it. Gold labels must all be "positive".
inline nlohmann::json synthetic_optimum_script() {
  nlohmann::json rules = nlohmann::json::array();
  rules.push_back(perturb_rule("typo"));
  rules.push_back(diff_rule());
  rules.push_back(gradient_rule());
  rules.push_back(propose_rule({
      "Classify the sentiment; stay ROBUST to typos and reply with one label.",
      "Label the text positive or negative, ignoring small corruptions.",
      "Classify the sentiment. ROBUST to noisy inputs; output one label.",
      "Decide the sentiment label for the text.",
      "Classify sentiment despite misspellings; answer in a ROBUST way with one label.",
  }));
  rules.push_back(paraphrase_rule());
  rules.push_back(nlohmann::json{{"name", "score-robust"},
                                 {"match", {{"system", "ROBUST"}}},
                                 {"responses", {"positive"}}});
  rules.push_back(nlohmann::json{{"name", "score-fallback"},
                                 {"match", {{"system", "[\\s\\S]+"}}},
                                 {"responses", {"negative"}}});
  return {{"version", 1}, {"rules", std::move(rules)}};
}

inline pertforge::backend::MockBackend make_mock(const nlohmann::json& script) {
  return pertforge::backend::MockBackend::from_script(script);
}

// Deterministic word-salad sentences for generated corpora.
inline std::string make_sentence(std::mt19937_64& rng, std::size_t words) {
  static const std::vector<std::string> bank = {
      "river", "stone",  "light",  "meadow", "signal", "harbor",  "window",
      "copper", "forest", "letter", "garden", "bridge", "summer",  "anchor",
      "bottle", "canyon", "velvet", "marble", "lantern"};
  std::string out;
  for (std::size_t i = 0; i < words; ++i) {
    if (i) out += ' ';
    out += bank[rng() % bank.size()];
  }
  out += '.';
  out[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(out[0])));
  return out;
}

}  // namespace test_support

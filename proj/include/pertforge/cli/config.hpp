#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pertforge/perturb/perturb.hpp"
#include "pertforge/pgo/pgo.hpp"
#include "pertforge/tasks/tasks.hpp"

namespace pertforge::cli {

/// Parsed key/value config document: [section] headers, key = value lines,
/// strings, numbers, booleans and string lists, # comments.
class ConfigDoc {
 public:
  struct Value {
    enum class Type { string, number, boolean, string_list };
    Type type = Type::string;
    std::string str;
    double num = 0.0;
    bool boolean = false;
    std::vector<std::string> list;
  };

  static ConfigDoc parse(std::string_view text, const std::string& source_name);
  static ConfigDoc parse_file(const std::filesystem::path& path);

  bool has(const std::string& section, const std::string& key) const;
  std::string get_string(const std::string& section, const std::string& key,
                         const std::string& fallback) const;
  double get_double(const std::string& section, const std::string& key, double fallback) const;
  long get_int(const std::string& section, const std::string& key, long fallback) const;
  bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
  std::vector<std::string> get_list(const std::string& section, const std::string& key) const;

  /// All keys of a section, in file order.
  std::vector<std::string> keys(const std::string& section) const;

 private:
  const Value* find(const std::string& section, const std::string& key) const;

  std::string source_;
  std::map<std::string, std::vector<std::pair<std::string, Value>>> sections_;
};

struct BackendSettings {
  std::string kind = "mock";  // "mock" or "live"
  std::string base_url;
  std::string model;
  std::string embedding_model = "text-embedding-3-small";
  std::filesystem::path mock_script;
  int max_attempts = 3;
  int initial_backoff_ms = 1000;
  int max_in_flight = 4;
};

/// Everything a run needs, resolved from the config file plus CLI overrides.
struct RunConfig {
  BackendSettings backend;
  tasks::TaskSpec task;
  std::string initial_prompt;
  perturb::EngineConfig engine;  // eps, rounds, candidate count, templates
  std::map<std::string, std::string> guide_overrides;
  pgo::OptimizeConfig pgo;
  perturb::Category category = perturb::Category::P1;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "out";
  std::filesystem::path perturbed_dir;  // defaults to out_dir

  /// Guide specs for the given codes with overrides applied; empty filter
  /// means all nine, canonical order either way.
  std::vector<perturb::PerturbationSpec> guides(
      const std::vector<std::string>& codes_filter = {}) const;

  /// Resolved values for run.json; no clocks or hostnames, so identical
  /// configs snapshot identically.
  nlohmann::json snapshot() const;
};

/// Loads and validates a config file. Relative paths inside the file are
/// resolved against the file's directory. eps defaults tighten to 0.98 for
/// summarization unless set explicitly.
RunConfig load_config(const std::filesystem::path& path);

}  // namespace pertforge::cli

#include "pertforge/cli/config.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "pertforge/error.hpp"

namespace pertforge::cli {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::string parse_quoted(std::string_view raw, const std::string& where) {
  std::string out;
  std::size_t i = 1;  // past the opening quote
  while (i < raw.size()) {
    const char c = raw[i];
    if (c == '"') {
      // Anything after the closing quote must be a comment or whitespace.
      const auto rest = trim(raw.substr(i + 1));
      if (!rest.empty() && rest[0] != '#') {
        throw ValidationError(where + ": trailing characters after string");
      }
      return out;
    }
    if (c == '\\' && i + 1 < raw.size()) {
      const char esc = raw[i + 1];
      switch (esc) {
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        default:
          throw ValidationError(where + ": unknown escape \\" + std::string(1, esc));
      }
      i += 2;
      continue;
    }
    out += c;
    ++i;
  }
  throw ValidationError(where + ": unterminated string");
}

}  // namespace

ConfigDoc ConfigDoc::parse(std::string_view text, const std::string& source_name) {
  ConfigDoc doc;
  doc.source_ = source_name;
  std::string section;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string where = source_name + ":" + std::to_string(line_no);
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ValidationError(where + ": malformed section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      doc.sections_.try_emplace(section);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ValidationError(where + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string raw_value = trim(line.substr(eq + 1));
    if (key.empty() || raw_value.empty()) {
      throw ValidationError(where + ": empty key or value");
    }

    Value value;
    if (raw_value[0] == '"') {
      value.type = Value::Type::string;
      value.str = parse_quoted(raw_value, where);
    } else if (raw_value[0] == '[') {
      if (raw_value.back() != ']') {
        throw ValidationError(where + ": unterminated list");
      }
      value.type = Value::Type::string_list;
      std::string inner = raw_value.substr(1, raw_value.size() - 2);
      std::size_t pos = 0;
      while (pos < inner.size()) {
        while (pos < inner.size() &&
               (std::isspace(static_cast<unsigned char>(inner[pos])) || inner[pos] == ',')) {
          ++pos;
        }
        if (pos >= inner.size()) break;
        if (inner[pos] != '"') {
          throw ValidationError(where + ": list items must be quoted strings");
        }
        const auto close = inner.find('"', pos + 1);
        if (close == std::string::npos) {
          throw ValidationError(where + ": unterminated list item");
        }
        value.list.push_back(inner.substr(pos + 1, close - pos - 1));
        pos = close + 1;
      }
    } else {
      // Strip a trailing comment, then try boolean / number.
      std::string bare = raw_value;
      const auto hash = bare.find('#');
      if (hash != std::string::npos) bare = trim(bare.substr(0, hash));
      if (bare == "true" || bare == "false") {
        value.type = Value::Type::boolean;
        value.boolean = bare == "true";
      } else {
        value.type = Value::Type::number;
        std::size_t consumed = 0;
        try {
          value.num = std::stod(bare, &consumed);
        } catch (const std::exception&) {
          throw ValidationError(where + ": cannot parse value '" + bare + "'");
        }
        if (consumed != bare.size()) {
          throw ValidationError(where + ": cannot parse value '" + bare + "'");
        }
      }
    }
    doc.sections_[section].emplace_back(key, std::move(value));
  }
  return doc;
}

ConfigDoc ConfigDoc::parse_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ValidationError("cannot open config " + path.string());
  }
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path.string());
}

const ConfigDoc::Value* ConfigDoc::find(const std::string& section,
                                        const std::string& key) const {
  const auto it = sections_.find(section);
  if (it == sections_.end()) return nullptr;
  for (const auto& [k, v] : it->second) {
    if (k == key) return &v;
  }
  return nullptr;
}

bool ConfigDoc::has(const std::string& section, const std::string& key) const {
  return find(section, key) != nullptr;
}

std::string ConfigDoc::get_string(const std::string& section, const std::string& key,
                                  const std::string& fallback) const {
  const auto* v = find(section, key);
  if (v == nullptr) return fallback;
  if (v->type != Value::Type::string) {
    throw ValidationError(source_ + ": [" + section + "] " + key + " must be a string");
  }
  return v->str;
}

double ConfigDoc::get_double(const std::string& section, const std::string& key,
                             double fallback) const {
  const auto* v = find(section, key);
  if (v == nullptr) return fallback;
  if (v->type != Value::Type::number) {
    throw ValidationError(source_ + ": [" + section + "] " + key + " must be a number");
  }
  return v->num;
}

long ConfigDoc::get_int(const std::string& section, const std::string& key,
                        long fallback) const {
  return static_cast<long>(get_double(section, key, static_cast<double>(fallback)));
}

bool ConfigDoc::get_bool(const std::string& section, const std::string& key,
                         bool fallback) const {
  const auto* v = find(section, key);
  if (v == nullptr) return fallback;
  if (v->type != Value::Type::boolean) {
    throw ValidationError(source_ + ": [" + section + "] " + key + " must be true or false");
  }
  return v->boolean;
}

std::vector<std::string> ConfigDoc::get_list(const std::string& section,
                                             const std::string& key) const {
  const auto* v = find(section, key);
  if (v == nullptr) return {};
  if (v->type != Value::Type::string_list) {
    throw ValidationError(source_ + ": [" + section + "] " + key + " must be a list");
  }
  return v->list;
}

std::vector<std::string> ConfigDoc::keys(const std::string& section) const {
  std::vector<std::string> out;
  const auto it = sections_.find(section);
  if (it == sections_.end()) return out;
  for (const auto& [k, _] : it->second) out.push_back(k);
  return out;
}

std::vector<perturb::PerturbationSpec> RunConfig::guides(
    const std::vector<std::string>& codes_filter) const {
  std::vector<perturb::PerturbationSpec> out;
  for (const auto& code : perturb::all_codes()) {
    if (!codes_filter.empty() &&
        std::find(codes_filter.begin(), codes_filter.end(), code) == codes_filter.end()) {
      continue;
    }
    auto spec = perturb::guide_for(code);
    const auto it = guide_overrides.find(code);
    if (it != guide_overrides.end()) spec.guide_text = it->second;
    out.push_back(std::move(spec));
  }
  // Reject filter entries that matched nothing.
  for (const auto& requested : codes_filter) {
    bool known = false;
    for (const auto& code : perturb::all_codes()) known = known || code == requested;
    if (!known) {
      std::string valid;
      for (const auto& code : perturb::all_codes()) {
        if (!valid.empty()) valid += ", ";
        valid += code;
      }
      throw ValidationError("unknown perturbation code '" + requested +
                            "' (valid codes: " + valid + ")");
    }
  }
  return out;
}

nlohmann::json RunConfig::snapshot() const {
  nlohmann::json overrides = nlohmann::json::object();
  for (const auto& [code, guide] : guide_overrides) overrides[code] = guide;
  return nlohmann::json{
      {"backend",
       {{"kind", backend.kind},
        {"base_url", backend.base_url},
        {"model", backend.model},
        {"embedding_model", backend.embedding_model},
        {"mock_script", backend.mock_script.string()},
        {"max_attempts", backend.max_attempts},
        {"initial_backoff_ms", backend.initial_backoff_ms},
        {"max_in_flight", backend.max_in_flight}}},
      {"task",
       {{"kind", std::string(tasks::to_string(task.kind))},
        {"labels", task.labelset},
        {"initial_prompt", initial_prompt}}},
      {"perturb",
       {{"eps_p1", engine.eps_p1},
        {"eps_p2", engine.eps_p2},
        {"rounds", engine.rounds},
        {"candidates_per_round", engine.candidates_per_round},
        {"guide_overrides", std::move(overrides)}}},
      {"pgo",
       {{"iterations", pgo.iterations},
        {"batch_p1", pgo.batch_p1},
        {"batch_p2", pgo.batch_p2},
        {"proposals", pgo.proposals},
        {"paraphrases", pgo.paraphrases},
        {"category", std::string(perturb::to_string(category))}}},
      {"seed", seed}};
}

RunConfig load_config(const std::filesystem::path& path) {
  const auto doc = ConfigDoc::parse_file(path);
  const auto base_dir = path.has_parent_path() ? path.parent_path()
                                               : std::filesystem::path(".");
  auto resolve = [&](const std::string& p) -> std::filesystem::path {
    if (p.empty()) return {};
    std::filesystem::path fp(p);
    return fp.is_absolute() ? fp : base_dir / fp;
  };

  RunConfig cfg;
  cfg.backend.kind = doc.get_string("backend", "kind", "mock");
  if (cfg.backend.kind != "mock" && cfg.backend.kind != "live") {
    throw ValidationError("backend.kind must be \"mock\" or \"live\"");
  }
  cfg.backend.base_url = doc.get_string("backend", "base_url", "");
  cfg.backend.model = doc.get_string("backend", "model", "");
  cfg.backend.embedding_model =
      doc.get_string("backend", "embedding_model", cfg.backend.embedding_model);
  cfg.backend.mock_script = resolve(doc.get_string("backend", "mock_script", ""));
  cfg.backend.max_attempts =
      static_cast<int>(doc.get_int("backend", "max_attempts", cfg.backend.max_attempts));
  cfg.backend.initial_backoff_ms = static_cast<int>(
      doc.get_int("backend", "initial_backoff_ms", cfg.backend.initial_backoff_ms));
  cfg.backend.max_in_flight =
      static_cast<int>(doc.get_int("backend", "max_in_flight", cfg.backend.max_in_flight));

  const auto kind = tasks::task_kind_from_string(doc.get_string("task", "kind", "classification"));
  cfg.task = tasks::TaskSpec::make(kind, doc.get_list("task", "labels"));
  cfg.initial_prompt = doc.get_string("task", "initial_prompt", "");
  if (cfg.initial_prompt.empty()) {
    throw ValidationError("task.initial_prompt is required");
  }

  // Long-text tasks keep a tighter similarity budget by default.
  const double default_eps_p1 = kind == tasks::TaskKind::summarization ? 0.98 : 0.90;
  const double default_eps_p2 = kind == tasks::TaskKind::summarization ? 0.98 : 0.80;
  cfg.engine.eps_p1 = doc.get_double("perturb", "eps_p1", default_eps_p1);
  cfg.engine.eps_p2 = doc.get_double("perturb", "eps_p2", default_eps_p2);
  cfg.engine.rounds = static_cast<int>(doc.get_int("perturb", "rounds", 3));
  cfg.engine.candidates_per_round =
      static_cast<int>(doc.get_int("perturb", "candidates_per_round", 4));
  cfg.engine.perturb_template = doc.get_string("perturb", "template", "");
  for (const auto& key : doc.keys("perturb")) {
    if (key.rfind("guide.", 0) == 0) {
      const std::string code = key.substr(6);
      perturb::guide_for(code);  // validates
      cfg.guide_overrides[code] = doc.get_string("perturb", key, "");
    }
  }

  cfg.pgo.iterations = static_cast<int>(doc.get_int("pgo", "iterations", 5));
  cfg.pgo.batch_p1 = static_cast<int>(doc.get_int("pgo", "batch_p1", 5));
  cfg.pgo.batch_p2 = static_cast<int>(doc.get_int("pgo", "batch_p2", 3));
  cfg.pgo.proposals = static_cast<int>(doc.get_int("pgo", "proposals", 4));
  cfg.pgo.paraphrases = static_cast<int>(doc.get_int("pgo", "paraphrases", 2));
  if (cfg.pgo.iterations < 1 || cfg.pgo.batch_p1 < 1 || cfg.pgo.batch_p2 < 1 ||
      cfg.pgo.proposals < 1 || cfg.pgo.paraphrases < 1 || cfg.engine.rounds < 1 ||
      cfg.engine.candidates_per_round < 1) {
    throw ValidationError("hyperparameters must be positive");
  }
  cfg.category = perturb::category_from_string(doc.get_string("pgo", "category", "P1"));

  cfg.seed = static_cast<std::uint64_t>(doc.get_int("seeds", "master", 0));
  cfg.engine.seed = cfg.seed;
  cfg.pgo.seed = cfg.seed;
  cfg.pgo.engine = cfg.engine;

  cfg.out_dir = resolve(doc.get_string("paths", "out_dir", "out"));
  const auto perturbed = doc.get_string("paths", "perturbed_dir", "");
  cfg.perturbed_dir = perturbed.empty() ? cfg.out_dir : resolve(perturbed);

  if (cfg.backend.kind == "mock" && cfg.backend.mock_script.empty()) {
    throw ValidationError("backend.mock_script is required for the mock backend");
  }
  if (cfg.backend.kind == "mock" && !std::filesystem::exists(cfg.backend.mock_script)) {
    throw ValidationError("backend.mock_script does not exist: " +
                          cfg.backend.mock_script.string());
  }
  if (cfg.backend.kind == "live" && (cfg.backend.base_url.empty() || cfg.backend.model.empty())) {
    throw ValidationError("backend.base_url and backend.model are required for live runs");
  }
  return cfg;
}

}  // namespace pertforge::cli

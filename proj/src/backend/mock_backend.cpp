#include "pertforge/backend/mock_backend.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "pertforge/error.hpp"

namespace pertforge::backend {

namespace {

MockTransform::Kind transform_kind(const std::string& name) {
  using Kind = MockTransform::Kind;
  if (name == "none") return Kind::none;
  if (name == "uppercase") return Kind::uppercase;
  if (name == "lowercase") return Kind::lowercase;
  if (name == "typo") return Kind::typo;
  if (name == "char_swap") return Kind::char_swap;
  if (name == "drop_word") return Kind::drop_word;
  if (name == "append") return Kind::append;
  if (name == "prepend") return Kind::prepend;
  if (name == "replace") return Kind::replace;
  throw ValidationError("mock script: unknown transform kind '" + name + "'");
}

std::string expand_template(const std::string& tmpl, const CompletionRequest& request,
                            const std::smatch& user_match, const std::smatch& system_match) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] != '{') {
      out.push_back(tmpl[i++]);
      continue;
    }
    const auto close = tmpl.find('}', i);
    if (close == std::string::npos) {
      out.append(tmpl.substr(i));
      break;
    }
    const std::string key = tmpl.substr(i + 1, close - i - 1);
    bool handled = true;
    if (key == "user") {
      out += request.user_text;
    } else if (key == "system") {
      out += request.system_text.value_or("");
    } else if (key == "seed") {
      out += std::to_string(request.seed.value_or(0));
    } else if (key.size() == 2 && (key[0] == 'u' || key[0] == 's') && std::isdigit(key[1])) {
      const auto& m = key[0] == 'u' ? user_match : system_match;
      const std::size_t group = static_cast<std::size_t>(key[1] - '0');
      if (group < m.size()) {
        out += m[group].str();
      }
    } else {
      handled = false;
    }
    if (!handled) {
      out.append(tmpl.substr(i, close - i + 1));  // unknown key stays literal
    }
    i = close + 1;
  }
  return out;
}

}  // namespace

MockBackend::MockBackend(std::vector<MockRule> rules,
                         std::optional<std::string> default_response)
    : default_response_(std::move(default_response)) {
  rules_.reserve(rules.size());
  for (auto& rule : rules) {
    CompiledRule compiled;
    if (rule.system_pattern) compiled.system_re = std::regex(*rule.system_pattern);
    if (rule.user_pattern) compiled.user_re = std::regex(*rule.user_pattern);
    compiled.rule = std::move(rule);
    rules_.push_back(std::move(compiled));
  }
}

MockBackend MockBackend::from_script(const nlohmann::json& script) {
  if (!script.contains("version") || script.at("version").get<int>() != 1) {
    throw ValidationError("mock script: missing or unsupported \"version\" (expected 1)");
  }
  std::vector<MockRule> rules;
  for (const auto& jr : script.value("rules", nlohmann::json::array())) {
    MockRule rule;
    rule.name = jr.value("name", "");
    if (jr.contains("match")) {
      const auto& m = jr.at("match");
      if (m.contains("system")) rule.system_pattern = m.at("system").get<std::string>();
      if (m.contains("user")) rule.user_pattern = m.at("user").get<std::string>();
    }
    rule.responses = jr.at("responses").get<std::vector<std::string>>();
    if (rule.responses.empty()) {
      throw ValidationError("mock script: rule '" + rule.name + "' has no responses");
    }
    if (jr.contains("transform")) {
      const auto& t = jr.at("transform");
      rule.transform.kind = transform_kind(t.at("kind").get<std::string>());
      rule.transform.arg_a = t.value("text", t.value("from", ""));
      rule.transform.arg_b = t.value("to", "");
    }
    rules.push_back(std::move(rule));
  }
  std::optional<std::string> fallback;
  if (script.contains("default")) fallback = script.at("default").get<std::string>();
  return MockBackend(std::move(rules), std::move(fallback));
}

MockBackend MockBackend::from_script_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ValidationError("mock script: cannot open " + path.string());
  }
  nlohmann::json script;
  try {
    in >> script;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("mock script " + path.string() + ": " + e.what());
  }
  return from_script(script);
}

std::string MockBackend::apply_transform(const MockTransform& t, std::string s,
                                         std::uint64_t seed) {
  using Kind = MockTransform::Kind;
  switch (t.kind) {
    case Kind::none:
      return s;
    case Kind::uppercase:
      for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
      return s;
    case Kind::lowercase:
      for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      return s;
    case Kind::typo: {
      std::vector<std::size_t> letters;
      for (std::size_t i = 0; i < s.size(); ++i) {
        if (std::isalpha(static_cast<unsigned char>(s[i]))) letters.push_back(i);
      }
      if (letters.empty()) return s;
      const std::size_t pos = letters[seed % letters.size()];
      const char c = s[pos];
      const char base = std::islower(static_cast<unsigned char>(c)) ? 'a' : 'A';
      s[pos] = static_cast<char>(base + (c - base + 1) % 26);
      return s;
    }
    case Kind::char_swap: {
      if (s.size() < 2) return s;
      const std::size_t pos = seed % (s.size() - 1);
      std::swap(s[pos], s[pos + 1]);
      return s;
    }
    case Kind::drop_word: {
      std::vector<std::string> words;
      std::istringstream iss(s);
      std::string w;
      while (iss >> w) words.push_back(w);
      if (words.size() < 2) return s;
      words.erase(words.begin() + static_cast<long>(seed % words.size()));
      std::string out;
      for (std::size_t i = 0; i < words.size(); ++i) {
        if (i) out += ' ';
        out += words[i];
      }
      return out;
    }
    case Kind::append:
      return s + t.arg_a;
    case Kind::prepend:
      return t.arg_a + s;
    case Kind::replace: {
      if (t.arg_a.empty()) return s;
      std::string out;
      std::size_t i = 0;
      while (i < s.size()) {
        if (s.compare(i, t.arg_a.size(), t.arg_a) == 0) {
          out += t.arg_b;
          i += t.arg_a.size();
        } else {
          out.push_back(s[i++]);
        }
      }
      return out;
    }
  }
  return s;
}

CompletionResult MockBackend::complete(const CompletionRequest& request) {
  validate(request);
  const std::string system = request.system_text.value_or("");
  const std::uint64_t seed = request.seed.value_or(0);

  for (const auto& compiled : rules_) {
    std::smatch system_match, user_match;
    if (compiled.system_re && !std::regex_search(system, system_match, *compiled.system_re)) {
      continue;
    }
    if (compiled.user_re &&
        !std::regex_search(request.user_text, user_match, *compiled.user_re)) {
      continue;
    }
    const auto& responses = compiled.rule.responses;
    const std::string& tmpl = responses[seed % responses.size()];
    std::string text = expand_template(tmpl, request, user_match, system_match);
    text = apply_transform(compiled.rule.transform, std::move(text), seed);

    CompletionResult result;
    result.text = std::move(text);
    result.prompt_tokens = count_tokens(system) + count_tokens(request.user_text);
    result.completion_tokens = count_tokens(result.text);
    result.source = CompletionResult::Source::mock;
    return result;
  }

  if (default_response_) {
    std::smatch none;
    CompletionResult result;
    result.text = expand_template(*default_response_, request, none, none);
    result.prompt_tokens = count_tokens(system) + count_tokens(request.user_text);
    result.completion_tokens = count_tokens(result.text);
    result.source = CompletionResult::Source::mock;
    return result;
  }
  throw ProtocolError("mock backend: no rule matched request (user text: '" +
                      request.user_text.substr(0, 80) + "...')");
}

std::vector<std::vector<double>> MockBackend::embed(const std::vector<std::string>& texts) {
  if (texts.empty()) {
    throw ValidationError("embed: empty batch");
  }
  return tf_.embed(texts);
}

}  // namespace pertforge::backend

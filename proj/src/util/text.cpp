#include "pertforge/util/text.hpp"

#include <cctype>

namespace pertforge::text {

std::vector<char32_t> to_codepoints(std::string_view s) {
  std::vector<char32_t> out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    std::size_t len = 0;
    char32_t cp = 0;
    if (b0 < 0x80) {
      len = 1;
      cp = b0;
    } else if ((b0 & 0xE0) == 0xC0) {
      len = 2;
      cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
      len = 3;
      cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
      len = 4;
      cp = b0 & 0x07;
    }
    bool ok = len > 0 && i + len <= s.size();
    for (std::size_t k = 1; ok && k < len; ++k) {
      const auto bk = static_cast<unsigned char>(s[i + k]);
      if ((bk & 0xC0) != 0x80) {
        ok = false;
      } else {
        cp = (cp << 6) | (bk & 0x3F);
      }
    }
    if (ok) {
      out.push_back(cp);
      i += len;
    } else {
      out.push_back(b0);  // invalid byte: pass through as its own scalar
      i += 1;
    }
  }
  return out;
}

std::string normalize(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    const auto uc = static_cast<unsigned char>(c);
    if (uc < 0x80 && std::ispunct(uc)) {
      continue;
    }
    out.push_back(uc < 0x80 ? static_cast<char>(std::tolower(uc)) : c);
  }
  return out;
}

std::vector<std::string> tokens(std::string_view s) {
  const std::string norm = normalize(s);
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < norm.size()) {
    while (i < norm.size() && std::isspace(static_cast<unsigned char>(norm[i]))) ++i;
    std::size_t j = i;
    while (j < norm.size() && !std::isspace(static_cast<unsigned char>(norm[j]))) ++j;
    if (j > i) out.emplace_back(norm.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string SentenceSplit::join() const {
  std::string out;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    out += sentences[i];
    out += separators[i];
  }
  return out;
}

SentenceSplit split_sentences(std::string_view s) {
  SentenceSplit out;
  auto is_terminal = [](char c) { return c == '.' || c == '!' || c == '?'; };
  auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };

  std::size_t start = 0;
  std::size_t i = 0;
  while (i < s.size()) {
    if (is_terminal(s[i])) {
      std::size_t end = i;
      while (end + 1 < s.size() && is_terminal(s[end + 1])) ++end;
      if (end + 1 < s.size() && is_space(s[end + 1])) {
        std::size_t sep_end = end + 1;
        while (sep_end < s.size() && is_space(s[sep_end])) ++sep_end;
        out.sentences.emplace_back(s.substr(start, end + 1 - start));
        out.separators.emplace_back(s.substr(end + 1, sep_end - end - 1));
        start = sep_end;
        i = sep_end;
        continue;
      }
      i = end + 1;
      continue;
    }
    ++i;
  }
  if (start < s.size() || out.sentences.empty()) {
    out.sentences.emplace_back(s.substr(start));
    out.separators.emplace_back("");
  }
  return out;
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (tag + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace pertforge::text

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace pertforge::text {

/// Decodes UTF-8 into Unicode scalar values. Invalid bytes are passed through
/// one byte = one scalar, so any byte string decodes deterministically.
std::vector<char32_t> to_codepoints(std::string_view s);

/// Lowercases ASCII letters and removes ASCII punctuation. Non-ASCII bytes
/// are kept untouched.
std::string normalize(std::string_view s);

/// normalize() followed by a whitespace split.
std::vector<std::string> tokens(std::string_view s);

/// A text split into sentences plus the separators between them, such that
/// concatenating sentences[i] + separators[i] in order reproduces the input
/// byte for byte. A sentence ends after a run of '.', '!' or '?' followed by
/// whitespace; text without such a boundary is a single sentence.
struct SentenceSplit {
  std::vector<std::string> sentences;
  std::vector<std::string> separators;  // same length; last entry may be ""

  std::string join() const;
};

SentenceSplit split_sentences(std::string_view s);

/// FNV-1a, used to derive stable per-text seeds.
std::uint64_t fnv1a(std::string_view s);

/// splitmix64-style mixing of a seed with a tag; chains give independent
/// deterministic streams for (sample, round, candidate) style derivations.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag);

}  // namespace pertforge::text

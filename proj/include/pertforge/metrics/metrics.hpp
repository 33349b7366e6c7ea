#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pertforge::metrics {

// ---------------------------------------------------------------------------
// Tokenization convention for every text metric in this module: lowercase,
// ASCII punctuation removed, whitespace split (text::tokens). Levenshtein is
// the exception; it works on raw Unicode scalar values.
// ---------------------------------------------------------------------------

enum class RougeVariant { rouge1, rouge2, rougeL };

std::string_view to_string(RougeVariant v);

struct RougeScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  RougeVariant variant = RougeVariant::rouge1;
};

struct SariScore {
  double keep = 0.0;
  double add = 0.0;
  double del = 0.0;
  double overall = 0.0;  // (keep + add + del) / 3
};

/// Levenshtein edit distance over Unicode scalar values: insert, delete,
/// substitute, each cost 1.
std::size_t levenshtein(std::string_view a, std::string_view b);

/// 1 - levenshtein(a,b) / max(|a|,|b|), measured in scalar values.
/// Both empty -> 1.0.
double lev_similarity(std::string_view a, std::string_view b);

/// ROUGE-1/2 via clipped n-gram overlap, ROUGE-L via longest common
/// subsequence of tokens. When both sides have no n-grams of the requested
/// order, scores fall back to 1.0 if the normalized token sequences are
/// equal and 0.0 otherwise; one-sided emptiness scores 0.0.
RougeScore rouge(std::string_view candidate, std::string_view reference, RougeVariant variant);

/// SARI with keep/add F1, delete precision, averaged over n-gram orders
/// 1..4. Keep and delete use multiset counts with source/candidate counts
/// scaled by the reference count; add uses n-gram presence. A component
/// whose required n-gram set is empty has precision/recall 1.0.
/// Throws ValidationError when references is empty.
SariScore sari(std::string_view source, std::string_view candidate,
               std::span<const std::string> references);

/// Fraction of predictions that exactly equal their gold label after
/// normalization (lowercase, punctuation stripped, whitespace trimmed).
/// Output that is not a bare label counts as wrong. Throws ValidationError
/// on a length mismatch or empty input.
double accuracy(std::span<const std::string> predictions, std::span<const std::string> gold,
                std::span<const std::string> labelset);

}  // namespace pertforge::metrics

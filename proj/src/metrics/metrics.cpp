#include "pertforge/metrics/metrics.hpp"

#include <algorithm>
#include <map>
#include <unordered_set>

#include "pertforge/error.hpp"
#include "pertforge/util/text.hpp"

namespace pertforge::metrics {

namespace {

double f_measure(double p, double r) {
  return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
}

// n-grams as joined strings; '\x1f' cannot appear in normalized tokens.
std::map<std::string, long> ngram_counts(const std::vector<std::string>& toks, std::size_t n) {
  std::map<std::string, long> counts;
  if (toks.size() < n || n == 0) return counts;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) {
    std::string key = toks[i];
    for (std::size_t k = 1; k < n; ++k) {
      key += '\x1f';
      key += toks[i + k];
    }
    ++counts[key];
  }
  return counts;
}

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  if (a.empty() || b.empty()) return 0;
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace

std::string_view to_string(RougeVariant v) {
  switch (v) {
    case RougeVariant::rouge1: return "rouge1";
    case RougeVariant::rouge2: return "rouge2";
    case RougeVariant::rougeL: return "rougeL";
  }
  return "rouge1";
}

std::size_t levenshtein(std::string_view a, std::string_view b) {
  const auto ca = text::to_codepoints(a);
  const auto cb = text::to_codepoints(b);
  if (ca.empty()) return cb.size();
  if (cb.empty()) return ca.size();

  std::vector<std::size_t> prev(cb.size() + 1), cur(cb.size() + 1);
  for (std::size_t j = 0; j <= cb.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= ca.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= cb.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (ca[i - 1] == cb[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[cb.size()];
}

double lev_similarity(std::string_view a, std::string_view b) {
  const std::size_t la = text::to_codepoints(a).size();
  const std::size_t lb = text::to_codepoints(b).size();
  const std::size_t longest = std::max(la, lb);
  if (longest == 0) return 1.0;
  return 1.0 - static_cast<double>(levenshtein(a, b)) / static_cast<double>(longest);
}

RougeScore rouge(std::string_view candidate, std::string_view reference, RougeVariant variant) {
  RougeScore score;
  score.variant = variant;
  const auto cand = text::tokens(candidate);
  const auto ref = text::tokens(reference);

  if (variant == RougeVariant::rougeL) {
    if (cand.empty() || ref.empty()) {
      const double v = cand == ref ? 1.0 : 0.0;
      score.precision = score.recall = score.f1 = v;
      return score;
    }
    const auto lcs = static_cast<double>(lcs_length(cand, ref));
    score.precision = lcs / static_cast<double>(cand.size());
    score.recall = lcs / static_cast<double>(ref.size());
    score.f1 = f_measure(score.precision, score.recall);
    return score;
  }

  const std::size_t n = variant == RougeVariant::rouge1 ? 1 : 2;
  const auto cand_grams = ngram_counts(cand, n);
  const auto ref_grams = ngram_counts(ref, n);
  if (cand_grams.empty() || ref_grams.empty()) {
    // No n-grams of this order on at least one side: fall back to token
    // sequence equality so identical texts keep a perfect score.
    const double v = cand_grams.empty() && ref_grams.empty() && cand == ref ? 1.0 : 0.0;
    score.precision = score.recall = score.f1 = v;
    return score;
  }
  long match = 0, cand_total = 0, ref_total = 0;
  for (const auto& [gram, count] : cand_grams) {
    cand_total += count;
    const auto it = ref_grams.find(gram);
    if (it != ref_grams.end()) match += std::min(count, it->second);
  }
  for (const auto& [gram, count] : ref_grams) ref_total += count;
  score.precision = static_cast<double>(match) / static_cast<double>(cand_total);
  score.recall = static_cast<double>(match) / static_cast<double>(ref_total);
  score.f1 = f_measure(score.precision, score.recall);
  return score;
}

SariScore sari(std::string_view source, std::string_view candidate,
               std::span<const std::string> references) {
  if (references.empty()) {
    throw ValidationError("sari: no references");
  }
  const long numref = static_cast<long>(references.size());
  const auto src_toks = text::tokens(source);
  const auto cand_toks = text::tokens(candidate);
  std::vector<std::vector<std::string>> ref_toks;
  ref_toks.reserve(references.size());
  for (const auto& r : references) ref_toks.push_back(text::tokens(r));

  double keep_sum = 0.0, add_sum = 0.0, del_sum = 0.0;
  constexpr std::size_t kMaxOrder = 4;
  for (std::size_t n = 1; n <= kMaxOrder; ++n) {
    auto src = ngram_counts(src_toks, n);
    auto cand = ngram_counts(cand_toks, n);
    std::map<std::string, long> ref;
    for (const auto& rt : ref_toks) {
      for (const auto& [gram, count] : ngram_counts(rt, n)) ref[gram] += count;
    }

    // Union of grams seen anywhere at this order.
    std::map<std::string, long> all;
    for (const auto& m : {src, cand, ref}) {
      for (const auto& [gram, _] : m) all[gram] = 0;
    }
    auto count_of = [](const std::map<std::string, long>& m, const std::string& g) -> long {
      const auto it = m.find(g);
      return it == m.end() ? 0 : it->second;
    };

    long keep_good = 0, keep_sys = 0, keep_all = 0;
    long del_good = 0, del_sys = 0;
    long add_good = 0, add_sys = 0, add_all = 0;
    for (const auto& [gram, _] : all) {
      const long s = count_of(src, gram) * numref;  // scaled to the reference count
      const long c = count_of(cand, gram) * numref;
      const long r = count_of(ref, gram);

      const long kept = std::min(s, c);
      keep_sys += kept;
      keep_good += std::min(kept, r);
      keep_all += std::min(s, r);

      const long deleted = std::max(0L, s - c);
      del_sys += deleted;
      del_good += std::min(deleted, std::max(0L, s - r));

      if (s == 0) {
        if (c > 0) {
          ++add_sys;
          if (r > 0) ++add_good;
        }
        if (r > 0) ++add_all;
      }
    }

    const double keep_p = keep_sys > 0 ? static_cast<double>(keep_good) / keep_sys : 1.0;
    const double keep_r = keep_all > 0 ? static_cast<double>(keep_good) / keep_all : 1.0;
    keep_sum += f_measure(keep_p, keep_r);

    del_sum += del_sys > 0 ? static_cast<double>(del_good) / del_sys : 1.0;

    const double add_p = add_sys > 0 ? static_cast<double>(add_good) / add_sys : 1.0;
    const double add_r = add_all > 0 ? static_cast<double>(add_good) / add_all : 1.0;
    add_sum += f_measure(add_p, add_r);
  }

  SariScore score;
  score.keep = keep_sum / kMaxOrder;
  score.add = add_sum / kMaxOrder;
  score.del = del_sum / kMaxOrder;
  score.overall = (score.keep + score.add + score.del) / 3.0;
  return score;
}

double accuracy(std::span<const std::string> predictions, std::span<const std::string> gold,
                std::span<const std::string> labelset) {
  if (predictions.size() != gold.size()) {
    throw ValidationError("accuracy: predictions and gold differ in length");
  }
  if (predictions.empty()) {
    throw ValidationError("accuracy: empty input");
  }
  auto trim = [](std::string s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return std::string();
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
  };
  std::unordered_set<std::string> labels;
  for (const auto& l : labelset) labels.insert(trim(text::normalize(l)));

  std::size_t correct = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const std::string pred = trim(text::normalize(predictions[i]));
    if (labels.count(pred) > 0 && pred == trim(text::normalize(gold[i]))) {
      ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(predictions.size());
}

}  // namespace pertforge::metrics

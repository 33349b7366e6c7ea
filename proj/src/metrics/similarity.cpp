#include "pertforge/metrics/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "pertforge/util/text.hpp"

namespace pertforge::metrics {

std::string_view to_string(SimilarityKind k) {
  return k == SimilarityKind::levenshtein ? "levenshtein" : "semantic";
}

SimilarityVerdict check_similarity(SimilarityKind kind, double value, double threshold) {
  return SimilarityVerdict{kind, value, threshold, value >= threshold};
}

std::vector<std::vector<double>> TfEmbedder::embed(const std::vector<std::string>& texts) {
  // Vocabulary is batch-scoped: both texts of a comparison must be embedded
  // in the same call.
  std::map<std::string, std::size_t> vocab;
  std::vector<std::vector<std::string>> toks;
  toks.reserve(texts.size());
  for (const auto& t : texts) {
    toks.push_back(text::tokens(t));
    for (const auto& tok : toks.back()) vocab.emplace(tok, 0);
  }
  std::size_t dim = 0;
  for (auto& [_, index] : vocab) index = dim++;

  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  for (const auto& tt : toks) {
    std::vector<double> v(std::max<std::size_t>(dim, 1), 0.0);
    for (const auto& tok : tt) v[vocab[tok]] += 1.0;
    double norm = 0.0;
    for (double x : v) norm += x * x;
    if (norm > 0.0) {
      norm = std::sqrt(norm);
      for (double& x : v) x /= norm;
    }
    out.push_back(std::move(v));
  }
  return out;
}

double semantic_similarity(std::string_view a, std::string_view b, Embedder& embedder) {
  if (a == b) return 1.0;
  const auto vecs = embedder.embed({std::string(a), std::string(b)});
  const auto& va = vecs.at(0);
  const auto& vb = vecs.at(1);
  double dot = 0.0, na = 0.0, nb = 0.0;
  const std::size_t dim = std::min(va.size(), vb.size());
  for (std::size_t i = 0; i < dim; ++i) dot += va[i] * vb[i];
  for (double x : va) na += x * x;
  for (double x : vb) nb += x * x;
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / std::sqrt(na * nb), 0.0, 1.0);
}

}  // namespace pertforge::metrics

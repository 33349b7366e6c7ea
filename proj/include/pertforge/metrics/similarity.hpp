#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace pertforge::metrics {

enum class SimilarityKind { levenshtein, semantic };

std::string_view to_string(SimilarityKind k);

/// Outcome of a similarity gate check: passed <=> value >= threshold.
struct SimilarityVerdict {
  SimilarityKind kind = SimilarityKind::levenshtein;
  double value = 0.0;
  double threshold = 0.0;
  bool passed = false;
};

SimilarityVerdict check_similarity(SimilarityKind kind, double value, double threshold);

/// Anything that can turn a batch of texts into L2-normalized vectors.
/// Vectors from one call share a coordinate space; texts that must be
/// compared are embedded together.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) = 0;
};

/// Offline fallback: term-frequency vectors over the batch vocabulary,
/// L2-normalized. Deterministic, no model behind it.
class TfEmbedder : public Embedder {
 public:
  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override;
};

/// Cosine of the two embedding vectors, clamped to [0,1]. Byte-identical
/// texts short-circuit to 1.0.
double semantic_similarity(std::string_view a, std::string_view b, Embedder& embedder);

}  // namespace pertforge::metrics

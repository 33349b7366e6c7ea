#pragma once

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pertforge/backend/backend.hpp"
#include "pertforge/metrics/similarity.hpp"
#include "pertforge/tasks/tasks.hpp"

namespace pertforge::perturb {

/// P1 is surface noise (gated by normalized Levenshtein); P2 rewrites
/// structure while preserving meaning (gated by semantic similarity).
enum class Category { P1, P2 };

std::string_view to_string(Category category);
Category category_from_string(std::string_view s);

struct PerturbationSpec {
  std::string code;  // C1..C3, W1..W3, S1..S3
  Category category = Category::P1;
  std::string guide_text;
  std::string description;
};

/// The nine codes in canonical order.
std::span<const std::string> all_codes();

/// The shipped spec for a code, with its default guide text. Unknown codes
/// throw ValidationError.
PerturbationSpec guide_for(std::string_view code);

/// Sensitive/robust flags per (task kind, perturbation code). Robust codes
/// are skipped during benchmark construction unless forced.
class SensitivityMatrix {
 public:
  /// Shipped defaults:
  ///   summarization  robust to C3, W2
  ///   simplification robust to C1, C2, C3
  ///   classification robust to C3, S1
  static SensitivityMatrix defaults();

  bool sensitive(tasks::TaskKind kind, std::string_view code) const;
  void set(tasks::TaskKind kind, std::string_view code, bool sensitive);

  /// Codes marked sensitive for a task, in canonical code order.
  std::vector<std::string> sensitive_codes(tasks::TaskKind kind) const;

 private:
  std::map<std::pair<int, std::string>, bool> cells_;
};

struct RoundTrace {
  int round = 0;
  std::string guide_code;
  bool skipped = false;       // mix-mode records skipped guides
  int sentence_index = -1;    // long-text rounds only
  std::string chosen;         // full text after the round
  double similarity = 0.0;    // gate value vs the original
  double adv_score = 0.0;
};

struct PerturbedSample {
  std::string source_id;
  std::string original;
  std::string perturbed;
  std::string label;
  std::vector<std::string> references;
  std::vector<std::string> applied_guides;
  std::vector<RoundTrace> iterations;
  metrics::SimilarityVerdict gate;

  nlohmann::json to_json() const;
  static PerturbedSample from_json(const nlohmann::json& j);

  tasks::Sample as_sample() const;  // perturbed text + original gold
};

struct GatedCandidate {
  std::string text;
  metrics::SimilarityVerdict verdict;
};

struct EngineConfig {
  double eps_p1 = 0.90;
  double eps_p2 = 0.80;
  int candidates_per_round = 4;  // k
  int rounds = 3;                // iterative attack count
  std::uint64_t seed = 0;
  double gen_temperature = 1.0;  // generation-phase sampling
  double gen_top_p = 0.95;
  int max_output_tokens = 1024;
  std::string perturb_template;  // empty -> default_perturb_template()

  double eps_for(Category category) const {
    return category == Category::P1 ? eps_p1 : eps_p2;
  }
};

/// "{guide}" and "{input}" placeholders.
const std::string& default_perturb_template();

/// One batch of k generation calls under the guide; candidates equal to x
/// and duplicates are dropped. May return fewer than k (or none).
std::vector<std::string> perturb_once(const std::string& x, const PerturbationSpec& spec,
                                      int k, backend::Backend& backend,
                                      const EngineConfig& cfg, std::uint64_t seed);

/// Keeps candidates whose similarity to the original clears eps. P1 uses
/// normalized Levenshtein, P2 semantic similarity; one embed batch covers
/// the whole candidate set.
std::vector<GatedCandidate> gate(std::span<const std::string> candidates,
                                 const std::string& original, Category category, double eps,
                                 metrics::Embedder& embedder);

struct Selection {
  std::size_t index = 0;
  double score = 0.0;
};

/// Scores every candidate as task input under the prompt and returns the
/// minimum-score one; ties break to the higher similarity value, then to
/// the earlier candidate.
Selection adversarial_select(std::span<const GatedCandidate> candidates,
                             std::string_view prompt_text, const tasks::Sample& sample,
                             const tasks::TaskSpec& task, backend::Backend& backend);

/// perturb_once -> gate -> adversarial_select for `rounds` rounds, feeding
/// each winner into the next round. Gating is always against the original
/// text. An empty round stops the loop early; an empty first round throws.
PerturbedSample perturb_iterative(const tasks::Sample& sample, const PerturbationSpec& spec,
                                  int rounds, std::string_view prompt_text,
                                  const tasks::TaskSpec& task, const EngineConfig& cfg,
                                  backend::Backend& backend);

/// Long-text variant: each round perturbs one uniformly chosen sentence,
/// leaving every other sentence byte-identical; similarity is computed over
/// the whole text.
PerturbedSample perturb_long_text(const tasks::Sample& sample, const PerturbationSpec& spec,
                                  int rounds, std::string_view prompt_text,
                                  const tasks::TaskSpec& task, const EngineConfig& cfg,
                                  backend::Backend& backend, std::uint64_t rng_seed);

}  // namespace pertforge::perturb

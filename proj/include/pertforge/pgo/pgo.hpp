#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pertforge/backend/backend.hpp"
#include "pertforge/perturb/perturb.hpp"
#include "pertforge/tasks/tasks.hpp"

namespace pertforge::pgo {

struct Prompt {
  enum class Provenance { initial, gradient_proposed, paraphrase };

  std::string id;
  std::string text;
  int iteration = 0;  // 0 <=> provenance == initial
  std::optional<std::string> parent;
  Provenance provenance = Provenance::initial;
  std::optional<std::string> gradient_id;

  static Prompt initial(std::string text);

  nlohmann::json to_json() const;
  static Prompt from_json(const nlohmann::json& j);
};

std::string_view to_string(Prompt::Provenance p);

/// What changed between a source text and its perturbed variant, as told by
/// the model.
struct DifferenceNote {
  std::string id;
  std::string source_id;
  std::string original;
  std::string perturbed;
  std::string note;

  nlohmann::json to_json() const;
  static DifferenceNote from_json(const nlohmann::json& j);
};

/// The textual pseudo-gradient: general guidance distilled from a batch of
/// difference notes.
struct GradientNote {
  std::string id;
  std::string text;
  std::vector<std::string> built_from;  // note ids
  int iteration = 0;

  nlohmann::json to_json() const;
  static GradientNote from_json(const nlohmann::json& j);
};

/// Generation templates used by the optimizer; all config-overridable.
struct PromptTemplates {
  std::string diff;        // {original}, {modified}
  std::string gradient;    // {notes}
  std::string propose;     // {prompt}, {gradient}
  std::string paraphrase;  // {prompt}

  static PromptTemplates defaults();
};

struct OptimizeConfig {
  int iterations = 5;
  int batch_p1 = 5;
  int batch_p2 = 3;
  int proposals = 4;    // m
  int paraphrases = 2;  // k per proposal
  std::uint64_t seed = 0;
  perturb::EngineConfig engine;  // perturbation-phase settings
  PromptTemplates templates = PromptTemplates::defaults();

  int batch_for(perturb::Category c) const {
    return c == perturb::Category::P1 ? batch_p1 : batch_p2;
  }

  nlohmann::json to_json() const;
};

/// Sequential accumulation of every P1 guide into one perturbed text, each
/// step Levenshtein-gated against the original and adversarially selected.
/// Guides whose round gates empty are skipped and recorded; a sample where
/// every guide skips throws.
perturb::PerturbedSample mix_mode(const tasks::Sample& sample,
                                  std::span<const perturb::PerturbationSpec> p1_guides,
                                  std::string_view prompt_text, const tasks::TaskSpec& task,
                                  const perturb::EngineConfig& cfg, backend::Backend& backend);

/// Independent application of each P2 guide to the same source, semantic-
/// similarity-gated; one sample per surviving guide. All guides gating
/// empty throws.
std::vector<perturb::PerturbedSample> combined_mode(
    const tasks::Sample& sample, std::span<const perturb::PerturbationSpec> p2_guides,
    std::string_view prompt_text, const tasks::TaskSpec& task,
    const perturb::EngineConfig& cfg, backend::Backend& backend);

/// One generation call describing the differences; identical texts short-
/// circuit to "no differences". An empty response is retried once, then
/// errors.
DifferenceNote extract_differences(const std::string& original, const std::string& perturbed,
                                   const std::string& source_id, backend::Backend& backend,
                                   const OptimizeConfig& cfg);

/// Summarizes the batch's notes into one piece of general guidance.
GradientNote generate_gradient(std::span<const DifferenceNote> notes, int iteration,
                               backend::Backend& backend, const OptimizeConfig& cfg);

/// m proposals conditioned on (incumbent, gradient); duplicates of the
/// incumbent and of each other are dropped. Nothing surviving throws
/// "proposal collapse".
std::vector<Prompt> propose_prompts(const Prompt& incumbent, const GradientNote& gradient,
                                    int m, backend::Backend& backend,
                                    const OptimizeConfig& cfg);

/// k rewrites at the same iteration index; empty or unchanged rewrites are
/// dropped (an empty result is fine).
std::vector<Prompt> paraphrase(const Prompt& prompt, int k, backend::Backend& backend,
                               const OptimizeConfig& cfg);

struct LossReport {
  std::map<std::string, double> per_code_score;  // task metric mean per code
  double total_score = 0.0;                      // sum over codes
  double total_loss = 0.0;                       // -total_score

  nlohmann::json to_json() const;
};

using SamplesByCode = std::map<std::string, std::vector<perturb::PerturbedSample>>;

/// Per-code score = task metric mean over that code's samples; loss is the
/// negated score, totals are sums over codes. A code with no samples errors.
LossReport evaluate_prompt_loss(std::string_view prompt_text, const SamplesByCode& sets_by_code,
                                const tasks::TaskSpec& task, backend::Backend& backend);

struct CandidateRecord {
  Prompt prompt;
  LossReport loss;
};

struct IterationRecord {
  int iteration = 0;
  std::vector<std::string> batch_ids;
  std::vector<DifferenceNote> notes;
  GradientNote gradient;
  std::vector<CandidateRecord> candidates;  // incumbent first, then pool
  Prompt incumbent;                         // winner of this iteration
  double incumbent_score = 0.0;             // validation total score
  std::vector<std::string> fully_skipped_guides;
  std::vector<std::string> dropped_guides_after;

  nlohmann::json to_json() const;
  static IterationRecord from_json(const nlohmann::json& j);
};

struct OptimizationRun {
  nlohmann::json config_snapshot;
  std::vector<IterationRecord> iterations;
  Prompt final_prompt;
  LossReport final_loss;  // on the perturbed training sets
  // (iteration, incumbent id, validation score, training score)
  std::vector<std::tuple<int, std::string, double, double>> selection_table;
};

/// Checkpoint directory: run.json, iter-{n}.json, final.json, ledger.json.
class RunStore {
 public:
  explicit RunStore(std::filesystem::path dir);

  const std::filesystem::path& dir() const { return dir_; }

  void write_run_header(const nlohmann::json& header);
  std::optional<nlohmann::json> read_run_header() const;

  void write_iteration(const IterationRecord& record);
  std::vector<IterationRecord> read_iterations() const;

  void write_final(const nlohmann::json& final_record);
  void write_ledger(const backend::CostLedger& ledger);
  std::optional<nlohmann::json> read_ledger() const;

 private:
  std::filesystem::path dir_;
};

/// The full two-phase loop. `guides` are the category's sensitivity-filtered
/// specs; `val_by_code` / `train_by_code` must cover exactly those codes.
/// Validation scores pick the per-iteration incumbent; training scores pick
/// the final prompt among incumbents. Transport failures abort with a
/// resumable checkpoint; pass resume=true to continue from one.
OptimizationRun optimize(const Prompt& initial, const tasks::Dataset& train,
                         const SamplesByCode& val_by_code, const SamplesByCode& train_by_code,
                         perturb::Category category,
                         std::span<const perturb::PerturbationSpec> guides,
                         const tasks::TaskSpec& task, const OptimizeConfig& cfg,
                         backend::MeteredBackend& backend, backend::CostLedger& ledger,
                         RunStore* store, bool resume);

}  // namespace pertforge::pgo

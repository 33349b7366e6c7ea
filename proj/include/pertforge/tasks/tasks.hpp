#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pertforge/backend/backend.hpp"

namespace pertforge::tasks {

enum class TaskKind { classification, simplification, summarization };

std::string_view to_string(TaskKind kind);
TaskKind task_kind_from_string(std::string_view s);

enum class TaskMetric { accuracy, sari, rouge_suite };

std::string_view to_string(TaskMetric metric);

/// What the task is and how a (prompt, input) pair becomes a request:
/// the prompt is the system message, the input is the user message.
struct TaskSpec {
  TaskKind kind = TaskKind::classification;
  std::vector<std::string> labelset;  // classification only
  TaskMetric metric = TaskMetric::accuracy;

  static TaskSpec make(TaskKind kind, std::vector<std::string> labelset = {});
  void validate() const;

  backend::CompletionRequest compose(std::string_view prompt_text, std::string_view input,
                                     std::uint64_t seed) const;

  /// True for kinds whose inputs are long texts perturbed sentence-wise.
  bool long_text() const { return kind == TaskKind::summarization; }
};

struct Sample {
  std::string id;
  std::string input;
  std::string label;                    // classification
  std::vector<std::string> references;  // generation tasks
};

struct Dataset {
  std::string name;
  std::vector<Sample> samples;
};

/// Reads a JSON-Lines dataset: one object per line with "id", "input", and
/// either "label" or "references" depending on the task kind. Parse or
/// schema problems name the offending line.
Dataset load_dataset(const std::filesystem::path& path, const TaskSpec& task);

struct Splits {
  Dataset train;
  Dataset validation;
  Dataset test;
};

/// Deterministic shuffle by seed, then contiguous split. Fractions must sum
/// to 1 and every split must be non-empty.
Splits split(const Dataset& dataset, const std::array<double, 3>& fractions, std::uint64_t seed);

/// Maps free-form model output onto a label: exact match after
/// normalization, else unique whole-word containment, else nothing.
std::optional<std::string> normalize_label(std::string_view raw,
                                           std::span<const std::string> labelset);

struct SampleScore {
  std::string id;
  double value = 0.0;
  bool failed = false;
};

struct ScoreReport {
  std::string dataset;
  std::string code;  // perturbation code, or "clean"
  std::string prompt_id;
  TaskMetric metric = TaskMetric::accuracy;
  std::vector<SampleScore> per_sample;
  double aggregate = 0.0;  // arithmetic mean of per-sample values
  // Summarization keeps the full triplet; aggregate is the rouge1 mean.
  double rouge1 = 0.0, rouge2 = 0.0, rougeL = 0.0;
  std::size_t failures = 0;

  nlohmann::json to_json() const;
  /// Rows in the "dataset,code,prompt_id,metric,value" CSV layout; the
  /// rouge suite emits one row per variant.
  std::vector<std::string> csv_rows() const;
  static std::string csv_header();
};

/// Scores a prompt over samples: each request uses the scoring settings
/// (temperature 0, top_p 1); a failing sample is retried once, then scored
/// at the metric minimum and flagged. Classification goes through
/// normalize_label; simplification through SARI (input as source);
/// summarization through ROUGE with rouge1 F1 as the scalar.
ScoreReport score(const TaskSpec& task, std::string_view prompt_text,
                  std::string_view prompt_id, std::span<const Sample> samples,
                  backend::Backend& backend);

/// Single-sample scalar, same rules as score(); `input` is the text sent to
/// the model (the sample's gold stays authoritative). Used for adversarial
/// candidate ranking, where the input is a perturbed variant.
double score_sample(const TaskSpec& task, std::string_view prompt_text, const Sample& sample,
                    std::string_view input, backend::Backend& backend);

}  // namespace pertforge::tasks

#include "pertforge/tasks/tasks.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <random>

#include "pertforge/error.hpp"
#include "pertforge/metrics/metrics.hpp"
#include "pertforge/util/text.hpp"

namespace pertforge::tasks {

std::string_view to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::classification: return "classification";
    case TaskKind::simplification: return "simplification";
    case TaskKind::summarization: return "summarization";
  }
  return "classification";
}

TaskKind task_kind_from_string(std::string_view s) {
  if (s == "classification") return TaskKind::classification;
  if (s == "simplification") return TaskKind::simplification;
  if (s == "summarization") return TaskKind::summarization;
  throw ValidationError("unknown task kind '" + std::string(s) + "'");
}

std::string_view to_string(TaskMetric metric) {
  switch (metric) {
    case TaskMetric::accuracy: return "accuracy";
    case TaskMetric::sari: return "sari";
    case TaskMetric::rouge_suite: return "rouge-suite";
  }
  return "accuracy";
}

TaskSpec TaskSpec::make(TaskKind kind, std::vector<std::string> labelset) {
  TaskSpec spec;
  spec.kind = kind;
  spec.labelset = std::move(labelset);
  switch (kind) {
    case TaskKind::classification: spec.metric = TaskMetric::accuracy; break;
    case TaskKind::simplification: spec.metric = TaskMetric::sari; break;
    case TaskKind::summarization: spec.metric = TaskMetric::rouge_suite; break;
  }
  spec.validate();
  return spec;
}

void TaskSpec::validate() const {
  if (kind == TaskKind::classification && labelset.empty()) {
    throw ValidationError("classification task requires a non-empty labelset");
  }
  if (kind != TaskKind::classification && !labelset.empty()) {
    throw ValidationError("generation tasks must not carry a labelset");
  }
}

backend::CompletionRequest TaskSpec::compose(std::string_view prompt_text,
                                             std::string_view input,
                                             std::uint64_t seed) const {
  backend::CompletionRequest request;
  request.system_text = std::string(prompt_text);
  request.user_text = std::string(input);
  request.temperature = 0.0;  // scoring settings
  request.top_p = 1.0;
  request.seed = seed;
  return request;
}

Dataset load_dataset(const std::filesystem::path& path, const TaskSpec& task) {
  std::ifstream in(path);
  if (!in) {
    throw ValidationError("cannot open dataset " + path.string());
  }
  Dataset dataset;
  dataset.name = path.stem().string();
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json row;
    try {
      row = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                            ": parse failure: " + e.what());
    }
    auto require = [&](const char* field) {
      if (!row.contains(field)) {
        throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                              ": missing field \"" + field + "\"");
      }
    };
    require("id");
    require("input");
    Sample sample;
    sample.id = row.at("id").is_string() ? row.at("id").get<std::string>()
                                         : row.at("id").dump();
    sample.input = row.at("input").get<std::string>();
    if (task.kind == TaskKind::classification) {
      require("label");
      sample.label = row.at("label").get<std::string>();
    } else {
      require("references");
      sample.references = row.at("references").get<std::vector<std::string>>();
      if (sample.references.empty()) {
        throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                              ": field \"references\" must be non-empty");
      }
    }
    dataset.samples.push_back(std::move(sample));
  }
  if (dataset.samples.empty()) {
    throw ValidationError("empty dataset: " + path.string());
  }
  return dataset;
}

Splits split(const Dataset& dataset, const std::array<double, 3>& fractions,
             std::uint64_t seed) {
  const double sum = fractions[0] + fractions[1] + fractions[2];
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ValidationError("split fractions must sum to 1");
  }
  std::vector<std::size_t> order(dataset.samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  // Hand-rolled Fisher-Yates: std::shuffle is not stable across standard
  // library implementations.
  std::mt19937_64 rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[rng() % i]);
  }
  const auto n = static_cast<double>(order.size());
  const auto n_train = static_cast<std::size_t>(std::llround(n * fractions[0]));
  const auto n_val = static_cast<std::size_t>(std::llround(n * fractions[1]));
  if (n_train == 0 || n_val == 0 || n_train + n_val >= order.size()) {
    throw ValidationError("split produces an empty subset");
  }
  Splits out;
  out.train.name = dataset.name + ".train";
  out.validation.name = dataset.name + ".val";
  out.test.name = dataset.name + ".test";
  for (std::size_t i = 0; i < order.size(); ++i) {
    const Sample& s = dataset.samples[order[i]];
    if (i < n_train) {
      out.train.samples.push_back(s);
    } else if (i < n_train + n_val) {
      out.validation.samples.push_back(s);
    } else {
      out.test.samples.push_back(s);
    }
  }
  return out;
}

std::optional<std::string> normalize_label(std::string_view raw,
                                           std::span<const std::string> labelset) {
  if (labelset.empty()) {
    throw ValidationError("normalize_label: empty labelset");
  }
  const auto raw_tokens = text::tokens(raw);
  std::string flat;
  for (const auto& t : raw_tokens) {
    if (!flat.empty()) flat += ' ';
    flat += t;
  }

  // Exact match after normalization.
  for (const auto& label : labelset) {
    const auto label_tokens = text::tokens(label);
    std::string label_flat;
    for (const auto& t : label_tokens) {
      if (!label_flat.empty()) label_flat += ' ';
      label_flat += t;
    }
    if (!label_flat.empty() && label_flat == flat) return label;
  }

  // Unique whole-word containment.
  std::optional<std::string> found;
  for (const auto& label : labelset) {
    const auto label_tokens = text::tokens(label);
    if (label_tokens.empty() || label_tokens.size() > raw_tokens.size()) continue;
    bool contained = false;
    for (std::size_t i = 0; i + label_tokens.size() <= raw_tokens.size() && !contained; ++i) {
      contained = std::equal(label_tokens.begin(), label_tokens.end(), raw_tokens.begin() + i);
    }
    if (contained) {
      if (found.has_value()) return std::nullopt;  // ambiguous
      found = label;
    }
  }
  return found;
}

nlohmann::json ScoreReport::to_json() const {
  nlohmann::json per = nlohmann::json::array();
  for (const auto& s : per_sample) {
    per.push_back({{"id", s.id}, {"value", s.value}, {"failed", s.failed}});
  }
  nlohmann::json j{{"dataset", dataset},
                   {"code", code},
                   {"prompt_id", prompt_id},
                   {"metric", std::string(to_string(metric))},
                   {"aggregate", aggregate},
                   {"count", per_sample.size()},
                   {"failures", failures},
                   {"per_sample", std::move(per)}};
  if (metric == TaskMetric::rouge_suite) {
    j["rouge1"] = rouge1;
    j["rouge2"] = rouge2;
    j["rougeL"] = rougeL;
  }
  return j;
}

std::string ScoreReport::csv_header() { return "dataset,code,prompt_id,metric,value"; }

std::vector<std::string> ScoreReport::csv_rows() const {
  auto row = [&](std::string_view metric_name, double value) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", value);
    return dataset + "," + code + "," + prompt_id + "," + std::string(metric_name) + "," + buf;
  };
  if (metric == TaskMetric::rouge_suite) {
    return {row("rouge1", rouge1), row("rouge2", rouge2), row("rougeL", rougeL)};
  }
  return {row(to_string(metric), aggregate)};
}

namespace {

struct SampleOutcome {
  double value = 0.0;
  double r1 = 0.0, r2 = 0.0, rl = 0.0;
  bool failed = false;
};

SampleOutcome score_one(const TaskSpec& task, std::string_view prompt_text,
                        const Sample& sample, std::string_view input,
                        backend::Backend& backend) {
  const std::uint64_t seed =
      text::mix_seed(text::fnv1a(prompt_text), text::fnv1a(sample.id) ^ text::fnv1a(input));
  const auto request = task.compose(prompt_text, input, seed);

  std::string output;
  bool ok = false;
  for (int attempt = 0; attempt < 2 && !ok; ++attempt) {
    try {
      output = backend.complete(request).text;
      ok = true;
    } catch (const Error&) {
      if (attempt == 1) break;
    }
  }
  SampleOutcome outcome;
  if (!ok) {
    outcome.failed = true;  // scored at the metric minimum
    return outcome;
  }
  switch (task.kind) {
    case TaskKind::classification: {
      const auto mapped = normalize_label(output, task.labelset);
      const auto gold = normalize_label(sample.label, task.labelset);
      outcome.value = mapped.has_value() && gold.has_value() && *mapped == *gold ? 1.0 : 0.0;
      break;
    }
    case TaskKind::simplification: {
      outcome.value = metrics::sari(input, output, sample.references).overall;
      break;
    }
    case TaskKind::summarization: {
      // Best reference by rouge1 f1 decides which reference the triplet uses.
      double best_r1 = -1.0;
      for (const auto& ref : sample.references) {
        const auto r1 = metrics::rouge(output, ref, metrics::RougeVariant::rouge1);
        if (r1.f1 > best_r1) {
          best_r1 = r1.f1;
          outcome.r1 = r1.f1;
          outcome.r2 = metrics::rouge(output, ref, metrics::RougeVariant::rouge2).f1;
          outcome.rl = metrics::rouge(output, ref, metrics::RougeVariant::rougeL).f1;
        }
      }
      outcome.value = outcome.r1;
      break;
    }
  }
  return outcome;
}

}  // namespace

ScoreReport score(const TaskSpec& task, std::string_view prompt_text,
                  std::string_view prompt_id, std::span<const Sample> samples,
                  backend::Backend& backend) {
  if (samples.empty()) {
    throw ValidationError("score: no samples");
  }
  ScoreReport report;
  report.prompt_id = std::string(prompt_id);
  report.metric = task.metric;
  double sum = 0.0, sum_r1 = 0.0, sum_r2 = 0.0, sum_rl = 0.0;
  for (const auto& sample : samples) {
    const auto outcome = score_one(task, prompt_text, sample, sample.input, backend);
    report.per_sample.push_back({sample.id, outcome.value, outcome.failed});
    if (outcome.failed) ++report.failures;
    sum += outcome.value;
    sum_r1 += outcome.r1;
    sum_r2 += outcome.r2;
    sum_rl += outcome.rl;
  }
  const auto n = static_cast<double>(samples.size());
  report.aggregate = sum / n;
  if (task.metric == TaskMetric::rouge_suite) {
    report.rouge1 = sum_r1 / n;
    report.rouge2 = sum_r2 / n;
    report.rougeL = sum_rl / n;
  }
  return report;
}

double score_sample(const TaskSpec& task, std::string_view prompt_text, const Sample& sample,
                    std::string_view input, backend::Backend& backend) {
  const auto outcome = score_one(task, prompt_text, sample, input, backend);
  return outcome.value;
}

}  // namespace pertforge::tasks

#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pertforge/perturb/perturb.hpp"

namespace pertforge::perturb {

struct BuildConfig {
  EngineConfig engine;
  bool force_all = false;  // perturb robust-marked codes too
  std::string initial_prompt;
  std::filesystem::path out_dir;
  double max_failure_fraction = 0.5;  // beyond this the run errors out
};

struct SubDataset {
  std::string code;
  std::vector<PerturbedSample> samples;
  std::size_t failures = 0;
  double mean_lev_pct = 0.0;  // percent, over emitted samples
  double mean_sem_pct = 0.0;
};

struct PerturbedDataset {
  std::string dataset;
  std::vector<SubDataset> subsets;
};

/// Applies every spec marked sensitive for the task (or every spec under
/// force_all) to the whole dataset: iterative perturbation for short-text
/// tasks, single-sentence rounds for long-text ones. Per-sample failures
/// are skipped and counted; more than max_failure_fraction of a subset
/// failing aborts the run.
PerturbedDataset build_benchmark(const tasks::Dataset& dataset, const tasks::TaskSpec& task,
                                 std::span<const PerturbationSpec> specs,
                                 const SensitivityMatrix& sensitivity, const BuildConfig& cfg,
                                 backend::Backend& backend);

/// {dataset}.{code}.jsonl files plus the {dataset}.similarity.csv report;
/// returns the written file paths, report last.
std::vector<std::filesystem::path> write_benchmark(const PerturbedDataset& result,
                                                   const std::filesystem::path& out_dir);

std::vector<PerturbedSample> read_perturbed_file(const std::filesystem::path& path);

/// CSV with header "dataset,code,lev_sim_pct,sem_sim_pct", percentages with
/// two decimals, one row per sub-dataset.
std::string similarity_report_csv(const PerturbedDataset& result);

/// Recomputes a subset's mean similarities (percent) from its samples.
void compute_similarity_means(SubDataset& subset, metrics::Embedder& embedder);

}  // namespace pertforge::perturb

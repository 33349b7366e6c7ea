#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "pertforge/backend/backend.hpp"
#include "pertforge/cli/config.hpp"

namespace pertforge::cli {

/// Instantiates the configured backend; live backends read the credential
/// from PERTFORGE_API_KEY.
std::unique_ptr<backend::Backend> make_backend(const RunConfig& cfg);

// Commands return process exit codes: 0 success, 1 validation failure,
// 2 run failure, 3 resumable abort.

/// Perturbs a dataset into {dataset}.{code}.jsonl sub-datasets plus the
/// similarity CSV under out_dir.
int cmd_build(const RunConfig& cfg, const std::filesystem::path& dataset_path,
              const std::vector<std::string>& codes_filter, bool force_all);

/// Runs the optimizer; train/val perturbed files are looked up in
/// perturbed_dir under the dataset stems. Writes the run directory and
/// prints the final prompt.
int cmd_optimize(const RunConfig& cfg, const std::filesystem::path& train_path,
                 const std::filesystem::path& val_path, const std::filesystem::path& run_dir,
                 bool resume);

/// Scores a prompt on each clean dataset plus whatever perturbed
/// sub-datasets exist for it; writes scores.csv/scores.json and the
/// relative-change heatmap CSV, then prints the cost summary.
int cmd_evaluate(const RunConfig& cfg, const std::string& prompt_text,
                 const std::string& prompt_id,
                 const std::vector<std::filesystem::path>& datasets,
                 const std::filesystem::path& out_dir);

/// Prints a finished (or checkpointed) run directory: iteration table,
/// final prompt, per-code scores, ledger line.
int cmd_report(const std::filesystem::path& run_dir);

}  // namespace pertforge::cli

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pertforge/cli/commands.hpp"
#include "pertforge/cli/config.hpp"
#include "pertforge/error.hpp"

namespace {

pertforge::cli::RunConfig resolve_config(const std::string& config_path,
                                         const std::string& backend_override,
                                         bool seed_given, std::uint64_t seed_override) {
  if (config_path.empty()) {
    throw pertforge::ValidationError("--config is required for this command");
  }
  auto cfg = pertforge::cli::load_config(config_path);
  if (!backend_override.empty()) {
    if (backend_override != "mock" && backend_override != "live") {
      throw pertforge::ValidationError("--backend must be mock or live");
    }
    cfg.backend.kind = backend_override;
    if (cfg.backend.kind == "mock" && cfg.backend.mock_script.empty()) {
      throw pertforge::ValidationError("config has no backend.mock_script for --backend mock");
    }
  }
  if (seed_given) {
    cfg.seed = seed_override;
    cfg.engine.seed = seed_override;
    cfg.pgo.seed = seed_override;
    cfg.pgo.engine.seed = seed_override;
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pertforge: similarity-gated perturbation benchmarks and robust prompt "
               "optimization against pluggable model backends"};
  app.require_subcommand(1);

  std::string config_path;
  std::string backend_override;
  std::uint64_t seed_override = 0;
  bool seed_given = false;
  app.add_option("--config", config_path, "config file (TOML-style)");
  app.add_option("--backend", backend_override, "override backend kind: mock or live");
  app.add_option("--seed", seed_override, "override the master seed")
      ->each([&](const std::string&) { seed_given = true; });

  auto* build = app.add_subcommand("build", "construct perturbed sub-datasets");
  std::string build_dataset;
  std::vector<std::string> build_codes;
  bool force_all = false;
  build->add_option("dataset", build_dataset, "clean dataset (JSON-Lines)")->required();
  build->add_option("--codes", build_codes, "perturbation codes to build")->delimiter(',');
  build->add_flag("--force-all", force_all, "also build robust-marked codes");

  auto* optimize = app.add_subcommand("optimize", "run the prompt optimizer");
  std::string train_path, val_path, run_dir, resume_dir;
  optimize->add_option("train", train_path, "clean training dataset")->required();
  optimize->add_option("val", val_path, "clean validation dataset")->required();
  optimize->add_option("--run-dir", run_dir, "run directory to create");
  optimize->add_option("--resume", resume_dir, "resume from this run directory");

  auto* evaluate = app.add_subcommand("evaluate", "score a prompt on clean + perturbed data");
  std::vector<std::string> eval_datasets;
  std::string prompt_text, prompt_file, prompt_id = "prompt", eval_out;
  evaluate->add_option("datasets", eval_datasets, "clean datasets")->required();
  evaluate->add_option("--prompt", prompt_text, "prompt text");
  evaluate->add_option("--prompt-file", prompt_file, "file containing the prompt text");
  evaluate->add_option("--prompt-id", prompt_id, "identifier used in reports");
  evaluate->add_option("--out", eval_out, "output directory (default: paths.out_dir)");

  auto* report = app.add_subcommand("report", "print a run directory");
  std::string report_dir;
  report->add_option("run_dir", report_dir, "run directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (build->parsed()) {
      const auto cfg = resolve_config(config_path, backend_override, seed_given, seed_override);
      return pertforge::cli::cmd_build(cfg, build_dataset, build_codes, force_all);
    }
    if (optimize->parsed()) {
      const auto cfg = resolve_config(config_path, backend_override, seed_given, seed_override);
      const bool resume = !resume_dir.empty();
      if (!resume && run_dir.empty()) {
        throw pertforge::ValidationError("optimize needs --run-dir (or --resume <dir>)");
      }
      return pertforge::cli::cmd_optimize(cfg, train_path, val_path,
                                          resume ? resume_dir : run_dir, resume);
    }
    if (evaluate->parsed()) {
      const auto cfg = resolve_config(config_path, backend_override, seed_given, seed_override);
      if (prompt_text.empty() == prompt_file.empty()) {
        throw pertforge::ValidationError("evaluate needs exactly one of --prompt/--prompt-file");
      }
      if (!prompt_file.empty()) {
        std::ifstream in(prompt_file);
        if (!in) {
          throw pertforge::ValidationError("cannot open prompt file " + prompt_file);
        }
        std::stringstream buf;
        buf << in.rdbuf();
        prompt_text = buf.str();
        while (!prompt_text.empty() &&
               (prompt_text.back() == '\n' || prompt_text.back() == '\r')) {
          prompt_text.pop_back();
        }
      }
      std::vector<std::filesystem::path> datasets(eval_datasets.begin(), eval_datasets.end());
      const std::filesystem::path out =
          eval_out.empty() ? cfg.out_dir : std::filesystem::path(eval_out);
      return pertforge::cli::cmd_evaluate(cfg, prompt_text, prompt_id, datasets, out);
    }
    if (report->parsed()) {
      return pertforge::cli::cmd_report(report_dir);
    }
  } catch (const pertforge::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

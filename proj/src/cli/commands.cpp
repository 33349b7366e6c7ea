#include "pertforge/cli/commands.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>

#include "pertforge/backend/http_backend.hpp"
#include "pertforge/backend/mock_backend.hpp"
#include "pertforge/error.hpp"
#include "pertforge/perturb/benchmark.hpp"
#include "pertforge/pgo/pgo.hpp"

namespace pertforge::cli {

namespace {

/// One process owns a run directory at a time.
class RunLock {
 public:
  explicit RunLock(const std::filesystem::path& dir) : path_(dir / "run.lock") {
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) {
      throw ValidationError("run directory is locked (remove " + path_.string() +
                            " if no run is active)");
    }
    ::close(fd);
  }
  ~RunLock() {
    std::error_code ec;
    std::filesystem::remove(path_, ec);
  }
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  std::filesystem::path path_;
};

template <typename Fn>
int guard(Fn&& fn) {
  try {
    fn();
    return 0;
  } catch (const ResumableAbort& e) {
    std::cerr << "error: " << e.what() << "\n";
    std::cerr << "checkpoint: " << e.checkpoint_dir << " (pass --resume to continue)\n";
    return 3;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw Error("cannot write " + path.string());
  }
  out << content;
}

std::vector<perturb::PerturbationSpec> category_guides(const RunConfig& cfg) {
  const auto matrix = perturb::SensitivityMatrix::defaults();
  std::vector<perturb::PerturbationSpec> out;
  for (auto& spec : cfg.guides()) {
    if (spec.category == cfg.category && matrix.sensitive(cfg.task.kind, spec.code)) {
      out.push_back(std::move(spec));
    }
  }
  return out;
}

pgo::SamplesByCode load_perturbed_sets(const RunConfig& cfg, const std::string& stem,
                                       std::span<const perturb::PerturbationSpec> guides) {
  pgo::SamplesByCode sets;
  for (const auto& spec : guides) {
    const auto path = cfg.perturbed_dir / (stem + "." + spec.code + ".jsonl");
    if (!std::filesystem::exists(path)) {
      throw ValidationError("missing perturbed data for code " + spec.code + ": expected " +
                            path.string());
    }
    sets[spec.code] = perturb::read_perturbed_file(path);
  }
  return sets;
}

}  // namespace

std::unique_ptr<backend::Backend> make_backend(const RunConfig& cfg) {
  if (cfg.backend.kind == "mock") {
    return std::make_unique<backend::MockBackend>(
        backend::MockBackend::from_script_file(cfg.backend.mock_script));
  }
  backend::HttpBackendConfig http;
  http.base_url = cfg.backend.base_url;
  http.model = cfg.backend.model;
  http.embedding_model = cfg.backend.embedding_model;
  http.retry.max_attempts = cfg.backend.max_attempts;
  http.retry.initial_backoff_ms = cfg.backend.initial_backoff_ms;
  http.max_in_flight = cfg.backend.max_in_flight;
  if (const char* key = std::getenv("PERTFORGE_API_KEY")) {
    http.api_key = key;
  }
  return std::make_unique<backend::HttpBackend>(std::move(http));
}

int cmd_build(const RunConfig& cfg, const std::filesystem::path& dataset_path,
              const std::vector<std::string>& codes_filter, bool force_all) {
  return guard([&] {
    const auto dataset = tasks::load_dataset(dataset_path, cfg.task);
    const auto specs = cfg.guides(codes_filter);
    const auto matrix = perturb::SensitivityMatrix::defaults();

    auto raw = make_backend(cfg);
    backend::CostLedger ledger;
    backend::MeteredBackend metered(*raw, ledger);
    metered.set_scope(backend::CostLedger::Phase::perturb, 1);

    perturb::BuildConfig build;
    build.engine = cfg.engine;
    build.force_all = force_all;
    build.initial_prompt = cfg.initial_prompt;
    build.out_dir = cfg.out_dir;

    const auto result =
        perturb::build_benchmark(dataset, cfg.task, specs, matrix, build, metered);
    const auto written = perturb::write_benchmark(result, cfg.out_dir);
    for (const auto& path : written) {
      std::cout << path.string() << "\n";
    }
    std::cout << ledger.summary_line() << "\n";
  });
}

int cmd_optimize(const RunConfig& cfg, const std::filesystem::path& train_path,
                 const std::filesystem::path& val_path, const std::filesystem::path& run_dir,
                 bool resume) {
  return guard([&] {
    const auto train = tasks::load_dataset(train_path, cfg.task);
    const auto guides = category_guides(cfg);
    if (guides.empty()) {
      throw ValidationError("no sensitive " +
                            std::string(perturb::to_string(cfg.category)) +
                            " perturbations for task " +
                            std::string(tasks::to_string(cfg.task.kind)));
    }
    const auto train_by_code = load_perturbed_sets(cfg, train_path.stem().string(), guides);
    const auto val_by_code = load_perturbed_sets(cfg, val_path.stem().string(), guides);

    std::filesystem::create_directories(run_dir);
    RunLock lock(run_dir);
    pgo::RunStore store(run_dir);

    nlohmann::json header{{"version", 1},
                          {"config", cfg.snapshot()},
                          {"train", train_path.stem().string()},
                          {"val", val_path.stem().string()}};
    backend::CostLedger ledger;
    if (resume) {
      const auto existing = store.read_run_header();
      if (!existing) {
        throw ValidationError("cannot resume: " + run_dir.string() + " has no run.json");
      }
      if (existing->at("config") != cfg.snapshot()) {
        throw ValidationError("cannot resume: config does not match the checkpoint");
      }
      if (const auto saved = store.read_ledger()) {
        ledger = backend::CostLedger::from_json(*saved);
      }
    } else {
      store.write_run_header(header);
    }

    auto raw = make_backend(cfg);
    backend::MeteredBackend metered(*raw, ledger);

    const auto initial = pgo::Prompt::initial(cfg.initial_prompt);
    const auto run = pgo::optimize(initial, train, val_by_code, train_by_code, cfg.category,
                                   guides, cfg.task, cfg.pgo, metered, ledger, &store, resume);

    std::cout << "final prompt (" << run.final_prompt.id << "):\n"
              << run.final_prompt.text << "\n\n";
    std::cout << "per-code scores on the perturbed training sets:\n";
    for (const auto& [code, score] : run.final_loss.per_code_score) {
      char line[64];
      std::snprintf(line, sizeof(line), "  %-3s %.4f", code.c_str(), score);
      std::cout << line << "\n";
    }
    std::cout << ledger.summary_line() << "\n";
    std::cout << "run directory: " << run_dir.string() << "\n";
  });
}

int cmd_evaluate(const RunConfig& cfg, const std::string& prompt_text,
                 const std::string& prompt_id,
                 const std::vector<std::filesystem::path>& datasets,
                 const std::filesystem::path& out_dir) {
  return guard([&] {
    if (prompt_text.empty()) {
      throw ValidationError("evaluate: prompt text is empty");
    }
    if (datasets.empty()) {
      throw ValidationError("evaluate: no datasets given");
    }
    auto raw = make_backend(cfg);
    backend::CostLedger ledger;
    backend::MeteredBackend metered(*raw, ledger);
    metered.set_scope(backend::CostLedger::Phase::optimize, 1);

    std::filesystem::create_directories(out_dir);
    std::vector<tasks::ScoreReport> reports;

    for (const auto& dataset_path : datasets) {
      const auto clean = tasks::load_dataset(dataset_path, cfg.task);
      auto clean_report =
          tasks::score(cfg.task, prompt_text, prompt_id, clean.samples, metered);
      clean_report.dataset = clean.name;
      clean_report.code = "clean";
      reports.push_back(std::move(clean_report));

      for (const auto& code : perturb::all_codes()) {
        const auto path = cfg.perturbed_dir / (clean.name + "." + code + ".jsonl");
        if (!std::filesystem::exists(path)) continue;
        const auto perturbed = perturb::read_perturbed_file(path);
        std::vector<tasks::Sample> samples;
        samples.reserve(perturbed.size());
        for (const auto& ps : perturbed) samples.push_back(ps.as_sample());
        auto report = tasks::score(cfg.task, prompt_text, prompt_id, samples, metered);
        report.dataset = clean.name;
        report.code = code;
        reports.push_back(std::move(report));
      }
    }

    std::string scores_csv = tasks::ScoreReport::csv_header() + "\n";
    nlohmann::json scores_json = nlohmann::json::array();
    for (const auto& report : reports) {
      for (const auto& row : report.csv_rows()) scores_csv += row + "\n";
      scores_json.push_back(report.to_json());
    }
    write_text_file(out_dir / "scores.csv", scores_csv);
    write_text_file(out_dir / "scores.json", scores_json.dump(2) + "\n");

    // Relative change vs the clean baseline, one row per metric value.
    std::string heatmap = "dataset,code,metric,rel_change\n";
    auto metric_values =
        [](const tasks::ScoreReport& r) -> std::vector<std::pair<std::string, double>> {
      if (r.metric == tasks::TaskMetric::rouge_suite) {
        return {{"rouge1", r.rouge1}, {"rouge2", r.rouge2}, {"rougeL", r.rougeL}};
      }
      return {{std::string(tasks::to_string(r.metric)), r.aggregate}};
    };
    for (const auto& report : reports) {
      if (report.code == "clean") continue;
      const tasks::ScoreReport* clean_report = nullptr;
      for (const auto& other : reports) {
        if (other.dataset == report.dataset && other.code == "clean") {
          clean_report = &other;
          break;
        }
      }
      if (clean_report == nullptr) continue;
      const auto clean_values = metric_values(*clean_report);
      const auto perturbed_values = metric_values(report);
      for (std::size_t i = 0; i < perturbed_values.size(); ++i) {
        const double clean_value = clean_values[i].second;
        heatmap += report.dataset + "," + report.code + "," + perturbed_values[i].first + ",";
        if (clean_value == 0.0) {
          heatmap += "\n";  // relative change undefined on a zero baseline
          continue;
        }
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.6f",
                      (perturbed_values[i].second - clean_value) / clean_value);
        heatmap += std::string(buf) + "\n";
      }
    }
    write_text_file(out_dir / "heatmap.csv", heatmap);
    write_text_file(out_dir / "ledger.json", ledger.to_json().dump(2) + "\n");

    std::cout << "wrote " << (out_dir / "scores.csv").string() << ", scores.json, heatmap.csv\n";
    std::cout << ledger.summary_line() << "\n";
  });
}

int cmd_report(const std::filesystem::path& run_dir) {
  return guard([&] {
    if (!std::filesystem::exists(run_dir / "run.json")) {
      throw ValidationError("not a run directory (no run.json): " + run_dir.string());
    }
    pgo::RunStore store(run_dir);
    const auto header = store.read_run_header();
    const auto iterations = store.read_iterations();

    std::cout << "run: " << run_dir.string() << "\n";
    if (header) {
      std::cout << "category: "
                << header->at("config").at("pgo").at("category").get<std::string>()
                << "  task: "
                << header->at("config").at("task").at("kind").get<std::string>() << "\n";
    }
    std::cout << "\niteration  incumbent            val_score\n";
    for (const auto& record : iterations) {
      char line[96];
      std::snprintf(line, sizeof(line), "%9d  %-20s %8.4f", record.iteration,
                    record.incumbent.id.c_str(), record.incumbent_score);
      std::cout << line << "\n";
    }
    std::ifstream final_in(run_dir / "final.json");
    if (final_in) {
      nlohmann::json final_record;
      final_in >> final_record;
      std::cout << "\nfinal prompt ("
                << final_record.at("prompt").at("id").get<std::string>() << "):\n"
                << final_record.at("prompt").at("text").get<std::string>() << "\n";
      std::cout << "\nper-code scores (training):\n";
      for (const auto& [code, score] : final_record.at("per_code_score").items()) {
        char line[64];
        std::snprintf(line, sizeof(line), "  %-3s %.4f", code.c_str(), score.get<double>());
        std::cout << line << "\n";
      }
    } else {
      std::cout << "\n(no final.json yet - run is resumable)\n";
    }
    if (const auto ledger_json = store.read_ledger()) {
      const auto ledger = backend::CostLedger::from_json(*ledger_json);
      std::cout << "\n" << ledger.summary_line() << "\n";
    }
  });
}

}  // namespace pertforge::cli

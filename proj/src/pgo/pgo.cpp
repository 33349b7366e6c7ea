#include "pertforge/pgo/pgo.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <set>
#include <unordered_set>

#include "pertforge/error.hpp"
#include "pertforge/util/text.hpp"

namespace pertforge::pgo {

namespace {

std::string expand(std::string tmpl,
                   std::initializer_list<std::pair<std::string_view, const std::string*>> vars) {
  for (const auto& [key, value] : vars) {
    std::size_t pos = 0;
    while ((pos = tmpl.find(key, pos)) != std::string::npos) {
      tmpl.replace(pos, key.size(), *value);
      pos += value->size();
    }
  }
  return tmpl;
}

backend::CompletionRequest generation_request(std::string user_text,
                                              const perturb::EngineConfig& engine,
                                              std::uint64_t seed) {
  backend::CompletionRequest request;
  request.user_text = std::move(user_text);
  request.temperature = engine.gen_temperature;
  request.top_p = engine.gen_top_p;
  request.max_output_tokens = engine.max_output_tokens;
  request.seed = seed;
  return request;
}

}  // namespace

std::string_view to_string(Prompt::Provenance p) {
  switch (p) {
    case Prompt::Provenance::initial: return "initial";
    case Prompt::Provenance::gradient_proposed: return "gradient-proposed";
    case Prompt::Provenance::paraphrase: return "paraphrase";
  }
  return "initial";
}

Prompt Prompt::initial(std::string text) {
  Prompt p;
  p.id = "p0";
  p.text = std::move(text);
  p.iteration = 0;
  p.provenance = Provenance::initial;
  return p;
}

nlohmann::json Prompt::to_json() const {
  nlohmann::json j{{"id", id},
                   {"text", text},
                   {"iteration", iteration},
                   {"provenance", std::string(pgo::to_string(provenance))}};
  if (parent) j["parent"] = *parent;
  if (gradient_id) j["gradient_id"] = *gradient_id;
  return j;
}

Prompt Prompt::from_json(const nlohmann::json& j) {
  Prompt p;
  p.id = j.at("id").get<std::string>();
  p.text = j.at("text").get<std::string>();
  p.iteration = j.at("iteration").get<int>();
  const auto prov = j.at("provenance").get<std::string>();
  p.provenance = prov == "initial"             ? Provenance::initial
                 : prov == "gradient-proposed" ? Provenance::gradient_proposed
                                               : Provenance::paraphrase;
  if (j.contains("parent")) p.parent = j.at("parent").get<std::string>();
  if (j.contains("gradient_id")) p.gradient_id = j.at("gradient_id").get<std::string>();
  return p;
}

nlohmann::json DifferenceNote::to_json() const {
  return {{"id", id},
          {"source_id", source_id},
          {"original", original},
          {"perturbed", perturbed},
          {"note", note}};
}

DifferenceNote DifferenceNote::from_json(const nlohmann::json& j) {
  DifferenceNote n;
  n.id = j.at("id").get<std::string>();
  n.source_id = j.at("source_id").get<std::string>();
  n.original = j.at("original").get<std::string>();
  n.perturbed = j.at("perturbed").get<std::string>();
  n.note = j.at("note").get<std::string>();
  return n;
}

nlohmann::json GradientNote::to_json() const {
  return {{"id", id}, {"text", text}, {"built_from", built_from}, {"iteration", iteration}};
}

GradientNote GradientNote::from_json(const nlohmann::json& j) {
  GradientNote g;
  g.id = j.at("id").get<std::string>();
  g.text = j.at("text").get<std::string>();
  g.built_from = j.at("built_from").get<std::vector<std::string>>();
  g.iteration = j.at("iteration").get<int>();
  return g;
}

PromptTemplates PromptTemplates::defaults() {
  PromptTemplates t;
  t.diff =
      "Compare the two texts and describe briefly every difference between them.\n\n"
      "Original:\n{original}\n\nModified:\n{modified}\n\nDifferences:";
  t.gradient =
      "The notes below describe how task inputs were corrupted.\n\nNotes:\n{notes}\n\n"
      "Write one short piece of general guidance for an instruction writer so the task "
      "instruction stays effective on inputs corrupted in these ways. Reply with only "
      "the guidance.";
  t.propose =
      "Current instruction:\n{prompt}\n\nObserved input corruptions:\n{gradient}\n\n"
      "Write an improved instruction that keeps working when inputs are corrupted as "
      "described. Reply with only the new instruction.";
  t.paraphrase =
      "Rewrite the following instruction so it keeps the same meaning but uses "
      "different wording.\n\nInstruction:\n{prompt}\n\nRewritten instruction:";
  return t;
}

nlohmann::json OptimizeConfig::to_json() const {
  return {{"iterations", iterations},
          {"batch_p1", batch_p1},
          {"batch_p2", batch_p2},
          {"proposals", proposals},
          {"paraphrases", paraphrases},
          {"seed", seed},
          {"engine",
           {{"eps_p1", engine.eps_p1},
            {"eps_p2", engine.eps_p2},
            {"rounds", engine.rounds},
            {"candidates_per_round", engine.candidates_per_round},
            {"gen_temperature", engine.gen_temperature},
            {"gen_top_p", engine.gen_top_p}}}};
}

perturb::PerturbedSample mix_mode(const tasks::Sample& sample,
                                  std::span<const perturb::PerturbationSpec> p1_guides,
                                  std::string_view prompt_text, const tasks::TaskSpec& task,
                                  const perturb::EngineConfig& cfg,
                                  backend::Backend& backend) {
  if (p1_guides.empty()) {
    throw ValidationError("mix_mode: no guides");
  }
  for (const auto& g : p1_guides) {
    if (g.category != perturb::Category::P1) {
      throw ValidationError("mix_mode: guide " + g.code + " is not P1");
    }
  }
  perturb::PerturbedSample out;
  out.source_id = sample.id;
  out.original = sample.input;
  out.label = sample.label;
  out.references = sample.references;
  out.gate = metrics::check_similarity(metrics::SimilarityKind::levenshtein, 1.0, cfg.eps_p1);

  std::string current = sample.input;
  int round = 0;
  for (const auto& spec : p1_guides) {
    ++round;
    const std::uint64_t seed = text::mix_seed(cfg.seed ^ text::fnv1a(sample.id),
                                              text::fnv1a(spec.code) + 7919);
    const auto candidates =
        perturb::perturb_once(current, spec, cfg.candidates_per_round, backend, cfg, seed);
    // Always gated against the original; the accumulated text must stay
    // within eps of it.
    const auto gated =
        perturb::gate(candidates, sample.input, perturb::Category::P1, cfg.eps_p1, backend);
    if (gated.empty()) {
      out.iterations.push_back({round, spec.code, true, -1, "", 0.0, 0.0});
      continue;
    }
    const auto selection =
        perturb::adversarial_select(gated, prompt_text, sample, task, backend);
    current = gated[selection.index].text;
    out.applied_guides.push_back(spec.code);
    out.iterations.push_back({round, spec.code, false, -1, current,
                              gated[selection.index].verdict.value, selection.score});
    out.gate = gated[selection.index].verdict;
  }
  if (out.applied_guides.empty()) {
    throw Error("mix_mode: every guide was gated out for sample '" + sample.id + "'");
  }
  out.perturbed = current;
  return out;
}

std::vector<perturb::PerturbedSample> combined_mode(
    const tasks::Sample& sample, std::span<const perturb::PerturbationSpec> p2_guides,
    std::string_view prompt_text, const tasks::TaskSpec& task,
    const perturb::EngineConfig& cfg, backend::Backend& backend) {
  if (p2_guides.empty()) {
    throw ValidationError("combined_mode: no guides");
  }
  for (const auto& g : p2_guides) {
    if (g.category != perturb::Category::P2) {
      throw ValidationError("combined_mode: guide " + g.code + " is not P2");
    }
  }
  std::vector<perturb::PerturbedSample> out;
  for (const auto& spec : p2_guides) {
    const std::uint64_t seed = text::mix_seed(cfg.seed ^ text::fnv1a(sample.id),
                                              text::fnv1a(spec.code) + 104729);
    const auto candidates =
        perturb::perturb_once(sample.input, spec, cfg.candidates_per_round, backend, cfg, seed);
    const auto gated =
        perturb::gate(candidates, sample.input, perturb::Category::P2, cfg.eps_p2, backend);
    if (gated.empty()) continue;
    const auto selection =
        perturb::adversarial_select(gated, prompt_text, sample, task, backend);

    perturb::PerturbedSample member;
    member.source_id = sample.id;
    member.original = sample.input;
    member.perturbed = gated[selection.index].text;
    member.label = sample.label;
    member.references = sample.references;
    member.applied_guides = {spec.code};
    member.iterations.push_back({1, spec.code, false, -1, member.perturbed,
                                 gated[selection.index].verdict.value, selection.score});
    member.gate = gated[selection.index].verdict;
    out.push_back(std::move(member));
  }
  if (out.empty()) {
    throw Error("combined_mode: no usable P2 perturbations for sample '" + sample.id + "'");
  }
  return out;
}

DifferenceNote extract_differences(const std::string& original, const std::string& perturbed,
                                   const std::string& source_id, backend::Backend& backend,
                                   const OptimizeConfig& cfg) {
  DifferenceNote note;
  note.source_id = source_id;
  note.original = original;
  note.perturbed = perturbed;
  char idbuf[24];
  std::snprintf(idbuf, sizeof(idbuf), "d%016llx",
                static_cast<unsigned long long>(
                    text::mix_seed(text::fnv1a(original), text::fnv1a(perturbed))));
  note.id = idbuf;

  if (original == perturbed) {
    note.note = "no differences";
    return note;
  }
  const std::string user = expand(
      cfg.templates.diff, {{"{original}", &original}, {"{modified}", &perturbed}});
  for (int attempt = 0; attempt < 2; ++attempt) {
    const std::uint64_t seed =
        text::mix_seed(cfg.seed ^ text::fnv1a(note.id), static_cast<std::uint64_t>(attempt));
    note.note = backend.complete(generation_request(user, cfg.engine, seed)).text;
    if (!note.note.empty()) return note;
  }
  throw Error("extract_differences: empty gradient material for sample '" + source_id + "'");
}

GradientNote generate_gradient(std::span<const DifferenceNote> notes, int iteration,
                               backend::Backend& backend, const OptimizeConfig& cfg) {
  if (notes.empty()) {
    throw ValidationError("generate_gradient: no difference notes");
  }
  std::string listing;
  for (std::size_t i = 0; i < notes.size(); ++i) {
    listing += std::to_string(i + 1) + ". " + notes[i].note + "\n";
  }
  const std::string user = expand(cfg.templates.gradient, {{"{notes}", &listing}});
  const std::uint64_t seed =
      text::mix_seed(cfg.seed, 0xC0FFEE + static_cast<std::uint64_t>(iteration));

  GradientNote gradient;
  gradient.id = "g" + std::to_string(iteration);
  gradient.iteration = iteration;
  gradient.text = backend.complete(generation_request(user, cfg.engine, seed)).text;
  if (gradient.text.empty()) {
    throw Error("generate_gradient: empty gradient text at iteration " +
                std::to_string(iteration));
  }
  for (const auto& n : notes) gradient.built_from.push_back(n.id);
  return gradient;
}

std::vector<Prompt> propose_prompts(const Prompt& incumbent, const GradientNote& gradient,
                                    int m, backend::Backend& backend,
                                    const OptimizeConfig& cfg) {
  if (m < 1) {
    throw ValidationError("propose_prompts: m must be >= 1");
  }
  const std::string user = expand(
      cfg.templates.propose, {{"{prompt}", &incumbent.text}, {"{gradient}", &gradient.text}});
  std::vector<Prompt> out;
  std::unordered_set<std::string> seen{incumbent.text};
  for (int j = 0; j < m; ++j) {
    const std::uint64_t seed = text::mix_seed(cfg.seed ^ text::fnv1a(gradient.id),
                                              static_cast<std::uint64_t>(j));
    std::string text = backend.complete(generation_request(user, cfg.engine, seed)).text;
    if (text.empty() || !seen.insert(text).second) continue;
    Prompt p;
    p.id = gradient.id + "-p" + std::to_string(j);
    p.text = std::move(text);
    p.iteration = incumbent.iteration + 1;
    p.parent = incumbent.id;
    p.provenance = Prompt::Provenance::gradient_proposed;
    p.gradient_id = gradient.id;
    out.push_back(std::move(p));
  }
  if (out.empty()) {
    throw Error("proposal collapse: all " + std::to_string(m) +
                " proposals were empty or duplicated the incumbent");
  }
  return out;
}

std::vector<Prompt> paraphrase(const Prompt& prompt, int k, backend::Backend& backend,
                               const OptimizeConfig& cfg) {
  if (k < 1) {
    throw ValidationError("paraphrase: k must be >= 1");
  }
  const std::string user = expand(cfg.templates.paraphrase, {{"{prompt}", &prompt.text}});
  std::vector<Prompt> out;
  std::unordered_set<std::string> seen{prompt.text};
  for (int l = 0; l < k; ++l) {
    const std::uint64_t seed = text::mix_seed(cfg.seed ^ text::fnv1a(prompt.id),
                                              0xBEEF + static_cast<std::uint64_t>(l));
    std::string text = backend.complete(generation_request(user, cfg.engine, seed)).text;
    if (text.empty() || !seen.insert(text).second) continue;
    Prompt p;
    p.id = prompt.id + "-r" + std::to_string(l);
    p.text = std::move(text);
    p.iteration = prompt.iteration;
    p.parent = prompt.id;
    p.provenance = Prompt::Provenance::paraphrase;
    p.gradient_id = prompt.gradient_id;
    out.push_back(std::move(p));
  }
  return out;
}

nlohmann::json LossReport::to_json() const {
  return {{"per_code_score", per_code_score},
          {"total_score", total_score},
          {"total_loss", total_loss}};
}

LossReport evaluate_prompt_loss(std::string_view prompt_text, const SamplesByCode& sets_by_code,
                                const tasks::TaskSpec& task, backend::Backend& backend) {
  if (sets_by_code.empty()) {
    throw ValidationError("evaluate_prompt_loss: no perturbed sets");
  }
  LossReport report;
  for (const auto& [code, perturbed] : sets_by_code) {
    if (perturbed.empty()) {
      throw ValidationError("evaluate_prompt_loss: code " + code + " has no samples");
    }
    std::vector<tasks::Sample> samples;
    samples.reserve(perturbed.size());
    for (const auto& ps : perturbed) samples.push_back(ps.as_sample());
    const auto scored = tasks::score(task, prompt_text, "candidate", samples, backend);
    if (scored.failures == scored.per_sample.size()) {
      // Individual failures score at the minimum; a code where every call
      // failed means the backend is gone and the run must stop resumably.
      throw TransportError("evaluate_prompt_loss: every sample failed for code " + code);
    }
    report.per_code_score[code] = scored.aggregate;
    report.total_score += scored.aggregate;
  }
  report.total_loss = -report.total_score;
  return report;
}

nlohmann::json IterationRecord::to_json() const {
  nlohmann::json jnotes = nlohmann::json::array();
  for (const auto& n : notes) jnotes.push_back(n.to_json());
  nlohmann::json jcands = nlohmann::json::array();
  for (const auto& c : candidates) {
    jcands.push_back({{"prompt", c.prompt.to_json()}, {"loss", c.loss.to_json()}});
  }
  return {{"iteration", iteration},
          {"batch_ids", batch_ids},
          {"notes", std::move(jnotes)},
          {"gradient", gradient.to_json()},
          {"candidates", std::move(jcands)},
          {"incumbent", incumbent.to_json()},
          {"incumbent_score", incumbent_score},
          {"fully_skipped_guides", fully_skipped_guides},
          {"dropped_guides_after", dropped_guides_after}};
}

IterationRecord IterationRecord::from_json(const nlohmann::json& j) {
  IterationRecord r;
  r.iteration = j.at("iteration").get<int>();
  r.batch_ids = j.at("batch_ids").get<std::vector<std::string>>();
  for (const auto& jn : j.at("notes")) r.notes.push_back(DifferenceNote::from_json(jn));
  r.gradient = GradientNote::from_json(j.at("gradient"));
  for (const auto& jc : j.at("candidates")) {
    CandidateRecord c;
    c.prompt = Prompt::from_json(jc.at("prompt"));
    const auto& jl = jc.at("loss");
    c.loss.per_code_score = jl.at("per_code_score").get<std::map<std::string, double>>();
    c.loss.total_score = jl.at("total_score").get<double>();
    c.loss.total_loss = jl.at("total_loss").get<double>();
    r.candidates.push_back(std::move(c));
  }
  r.incumbent = Prompt::from_json(j.at("incumbent"));
  r.incumbent_score = j.at("incumbent_score").get<double>();
  r.fully_skipped_guides = j.at("fully_skipped_guides").get<std::vector<std::string>>();
  r.dropped_guides_after = j.at("dropped_guides_after").get<std::vector<std::string>>();
  return r;
}

RunStore::RunStore(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

namespace {

void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw Error("cannot write " + path.string());
  }
  out << j.dump(2) << "\n";
}

std::optional<nlohmann::json> read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("corrupt checkpoint file " + path.string() + ": " + e.what());
  }
  return j;
}

}  // namespace

void RunStore::write_run_header(const nlohmann::json& header) {
  write_json_file(dir_ / "run.json", header);
}

std::optional<nlohmann::json> RunStore::read_run_header() const {
  return read_json_file(dir_ / "run.json");
}

void RunStore::write_iteration(const IterationRecord& record) {
  write_json_file(dir_ / ("iter-" + std::to_string(record.iteration) + ".json"),
                  record.to_json());
}

std::vector<IterationRecord> RunStore::read_iterations() const {
  std::vector<IterationRecord> out;
  for (int i = 1;; ++i) {
    const auto j = read_json_file(dir_ / ("iter-" + std::to_string(i) + ".json"));
    if (!j) break;
    out.push_back(IterationRecord::from_json(*j));
  }
  return out;
}

void RunStore::write_final(const nlohmann::json& final_record) {
  write_json_file(dir_ / "final.json", final_record);
}

void RunStore::write_ledger(const backend::CostLedger& ledger) {
  write_json_file(dir_ / "ledger.json", ledger.to_json());
}

std::optional<nlohmann::json> RunStore::read_ledger() const {
  return read_json_file(dir_ / "ledger.json");
}

namespace {

std::vector<std::size_t> sample_batch_indices(std::size_t n, std::size_t batch,
                                              std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    std::swap(order[i - 1], order[rng() % i]);
  }
  order.resize(std::min(n, batch));
  return order;
}

// argmax by score, ties to fewer characters, then earlier position.
std::size_t select_best(const std::vector<CandidateRecord>& candidates) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    const auto& cur = candidates[i];
    const auto& win = candidates[best];
    if (cur.loss.total_score > win.loss.total_score ||
        (cur.loss.total_score == win.loss.total_score &&
         cur.prompt.text.size() < win.prompt.text.size())) {
      best = i;
    }
  }
  return best;
}

}  // namespace

OptimizationRun optimize(const Prompt& initial, const tasks::Dataset& train,
                         const SamplesByCode& val_by_code, const SamplesByCode& train_by_code,
                         perturb::Category category,
                         std::span<const perturb::PerturbationSpec> guides,
                         const tasks::TaskSpec& task, const OptimizeConfig& cfg,
                         backend::MeteredBackend& backend, backend::CostLedger& ledger,
                         RunStore* store, bool resume) {
  if (cfg.iterations < 1) {
    throw ValidationError("optimize: iterations must be >= 1");
  }
  if (guides.empty()) {
    throw ValidationError("optimize: no guides for category " +
                          std::string(perturb::to_string(category)));
  }
  for (const auto& g : guides) {
    for (const auto* sets : {&val_by_code, &train_by_code}) {
      if (sets->find(g.code) == sets->end() || sets->at(g.code).empty()) {
        throw ValidationError("optimize: missing perturbed data for code " + g.code);
      }
    }
  }
  if (train.samples.empty()) {
    throw ValidationError("optimize: empty training set");
  }

  OptimizationRun run;
  run.config_snapshot = cfg.to_json();
  Prompt incumbent = initial;
  std::vector<perturb::PerturbationSpec> active(guides.begin(), guides.end());
  std::set<std::string> failed_once;
  int start_iteration = 1;

  if (resume) {
    if (store == nullptr) {
      throw ValidationError("optimize: resume requires a run directory");
    }
    run.iterations = store->read_iterations();
    if (!run.iterations.empty()) {
      const auto& last = run.iterations.back();
      incumbent = last.incumbent;
      start_iteration = last.iteration + 1;
      std::erase_if(active, [&](const perturb::PerturbationSpec& g) {
        return std::find(last.dropped_guides_after.begin(), last.dropped_guides_after.end(),
                         g.code) != last.dropped_guides_after.end();
      });
      for (const auto& code : last.fully_skipped_guides) failed_once.insert(code);
    }
  }

  try {
    for (int iteration = start_iteration; iteration <= cfg.iterations; ++iteration) {
      IterationRecord record;
      record.iteration = iteration;

      // Phase A: pseudo-gradient perturbation.
      backend.set_scope(backend::CostLedger::Phase::perturb, iteration);
      perturb::EngineConfig engine = cfg.engine;
      engine.seed = text::mix_seed(cfg.seed, static_cast<std::uint64_t>(iteration));

      const auto batch_size = static_cast<std::size_t>(cfg.batch_for(category));
      const auto indices = sample_batch_indices(
          train.samples.size(), batch_size,
          text::mix_seed(cfg.seed, 0xBA7C4 + static_cast<std::uint64_t>(iteration)));

      std::vector<perturb::PerturbedSample> perturbed;
      std::map<std::string, std::size_t> skip_counts;
      std::size_t mix_samples = 0;
      for (const auto idx : indices) {
        const auto& sample = train.samples[idx];
        record.batch_ids.push_back(sample.id);
        try {
          if (category == perturb::Category::P1) {
            auto ps = mix_mode(sample, active, incumbent.text, task, engine, backend);
            ++mix_samples;
            for (const auto& r : ps.iterations) {
              if (r.skipped) ++skip_counts[r.guide_code];
            }
            perturbed.push_back(std::move(ps));
          } else {
            auto members = combined_mode(sample, active, incumbent.text, task, engine, backend);
            // The most adversarial member carries the difference signal.
            std::size_t pick = 0;
            for (std::size_t i = 1; i < members.size(); ++i) {
              const auto& a = members[i].iterations.front();
              const auto& b = members[pick].iterations.front();
              if (a.adv_score < b.adv_score ||
                  (a.adv_score == b.adv_score && a.similarity > b.similarity)) {
                pick = i;
              }
            }
            perturbed.push_back(std::move(members[pick]));
          }
        } catch (const TransportError&) {
          throw;
        } catch (const Error&) {
          // Sample-level dead end; the batch continues without it.
        }
      }
      if (perturbed.empty()) {
        throw Error("optimize: iteration " + std::to_string(iteration) +
                    " produced no usable perturbed samples");
      }

      // Phase O: gradient synthesis and prompt search.
      backend.set_scope(backend::CostLedger::Phase::optimize, iteration);
      for (const auto& ps : perturbed) {
        record.notes.push_back(
            extract_differences(ps.original, ps.perturbed, ps.source_id, backend, cfg));
      }
      record.gradient = generate_gradient(record.notes, iteration, backend, cfg);

      auto proposals = propose_prompts(incumbent, record.gradient, cfg.proposals, backend, cfg);
      std::vector<Prompt> pool;
      for (const auto& proposal : proposals) {
        pool.push_back(proposal);
        for (auto& variant : paraphrase(proposal, cfg.paraphrases, backend, cfg)) {
          pool.push_back(std::move(variant));
        }
      }

      record.candidates.push_back(
          {incumbent, evaluate_prompt_loss(incumbent.text, val_by_code, task, backend)});
      for (const auto& candidate : pool) {
        record.candidates.push_back(
            {candidate, evaluate_prompt_loss(candidate.text, val_by_code, task, backend)});
      }
      const auto best = select_best(record.candidates);
      record.incumbent = record.candidates[best].prompt;
      record.incumbent_score = record.candidates[best].loss.total_score;

      // Mix-mode guides that gated out for the whole batch get one more
      // iteration before they are dropped from the run.
      if (category == perturb::Category::P1 && mix_samples > 0) {
        for (const auto& [code, count] : skip_counts) {
          if (count == mix_samples) record.fully_skipped_guides.push_back(code);
        }
        std::vector<std::string> dropped;
        for (const auto& code : record.fully_skipped_guides) {
          if (failed_once.count(code) > 0) dropped.push_back(code);
        }
        for (const auto& code : dropped) {
          std::erase_if(active,
                        [&](const perturb::PerturbationSpec& g) { return g.code == code; });
        }
        failed_once.clear();
        for (const auto& code : record.fully_skipped_guides) {
          if (std::find(dropped.begin(), dropped.end(), code) == dropped.end()) {
            failed_once.insert(code);
          }
        }
        if (active.empty()) {
          throw Error("optimize: every mix-mode guide was dropped");
        }
        for (const auto& code : dropped) record.dropped_guides_after.push_back(code);
        if (!run.iterations.empty()) {
          // Dropped guides accumulate across iterations.
          for (const auto& prev : run.iterations.back().dropped_guides_after) {
            if (std::find(record.dropped_guides_after.begin(),
                          record.dropped_guides_after.end(),
                          prev) == record.dropped_guides_after.end()) {
              record.dropped_guides_after.push_back(prev);
            }
          }
        }
        std::sort(record.dropped_guides_after.begin(), record.dropped_guides_after.end());
      }

      incumbent = record.incumbent;
      run.iterations.push_back(record);
      if (store != nullptr) {
        store->write_iteration(record);
        store->write_ledger(ledger);
      }
    }

    // Final pick: highest training-set score among per-iteration incumbents.
    backend.set_scope(backend::CostLedger::Phase::optimize, 0);
    std::map<std::string, LossReport> train_loss_by_id;
    std::size_t best_index = 0;
    double best_train = 0.0;
    for (std::size_t i = 0; i < run.iterations.size(); ++i) {
      const auto& rec = run.iterations[i];
      if (train_loss_by_id.find(rec.incumbent.id) == train_loss_by_id.end()) {
        train_loss_by_id[rec.incumbent.id] =
            evaluate_prompt_loss(rec.incumbent.text, train_by_code, task, backend);
      }
      const double train_score = train_loss_by_id[rec.incumbent.id].total_score;
      run.selection_table.emplace_back(rec.iteration, rec.incumbent.id, rec.incumbent_score,
                                       train_score);
      const auto& best_rec = run.iterations[best_index];
      if (i == 0 || train_score > best_train ||
          (train_score == best_train &&
           rec.incumbent.text.size() < best_rec.incumbent.text.size())) {
        best_index = i;
        best_train = train_score;
      }
    }
    run.final_prompt = run.iterations[best_index].incumbent;
    run.final_loss = train_loss_by_id[run.final_prompt.id];

    if (store != nullptr) {
      nlohmann::json table = nlohmann::json::array();
      for (const auto& [iter, id, val_score, train_score] : run.selection_table) {
        table.push_back({{"iteration", iter},
                         {"incumbent_id", id},
                         {"val_score", val_score},
                         {"train_score", train_score}});
      }
      store->write_final({{"prompt", run.final_prompt.to_json()},
                          {"train_score", best_train},
                          {"per_code_score", run.final_loss.per_code_score},
                          {"selection", std::move(table)}});
      store->write_ledger(ledger);
    }
  } catch (const TransportError& e) {
    if (store != nullptr) {
      // ledger.json stays at the last completed-iteration snapshot; the
      // resumed run re-records the interrupted iteration in full.
      throw ResumableAbort(std::string("optimize: transport failure: ") + e.what(),
                           store->dir().string());
    }
    throw;
  }
  return run;
}

}  // namespace pertforge::pgo

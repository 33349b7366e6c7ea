#include "pertforge/perturb/perturb.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <unordered_set>

#include "pertforge/error.hpp"
#include "pertforge/metrics/metrics.hpp"
#include "pertforge/util/text.hpp"

namespace pertforge::perturb {

std::string_view to_string(Category category) {
  return category == Category::P1 ? "P1" : "P2";
}

Category category_from_string(std::string_view s) {
  if (s == "P1") return Category::P1;
  if (s == "P2") return Category::P2;
  throw ValidationError("unknown perturbation category '" + std::string(s) + "'");
}

namespace {

const std::array<PerturbationSpec, 9>& guide_table() {
  static const std::array<PerturbationSpec, 9> table{{
      {"C1", Category::P1,
       "Rewrite the text so that a few words contain realistic typos. Change nothing else.",
       "Change words to have typos"},
      {"C2", Category::P1,
       "Rewrite the text, changing a few letters inside words (swap, replace, or double "
       "single letters). Change nothing else.",
       "Change letters"},
      {"C3", Category::P1,
       "Rewrite the text, inserting a few extraneous characters such as stray punctuation "
       "or symbols. Change nothing else.",
       "Add extraneous characters"},
      {"W1", Category::P2,
       "Rewrite the text, replacing a few words with synonyms. Preserve the meaning.",
       "Change word to synonyms"},
      {"W2", Category::P2,
       "Rewrite the text, deleting words that carry little meaning, such as fillers or "
       "redundant modifiers. Preserve the meaning.",
       "Delete meaningless words"},
      {"W3", Category::P2,
       "Rewrite the text, inserting a few neutral words that do not change the meaning.",
       "Add neutral words"},
      {"S1", Category::P1,
       "Rewrite the text, adding a meaningless handle or tag such as @user or #topic. "
       "Change nothing else.",
       "Add meaningless handle"},
      {"S2", Category::P2, "Paraphrase the text, preserving its meaning.",
       "Paraphrase the sentence"},
      {"S3", Category::P2,
       "Rewrite the text with a different syntactic structure, for example a different "
       "voice or clause order, while preserving the meaning.",
       "Change the syntactic structure"},
  }};
  return table;
}

const std::vector<std::string>& code_list() {
  static const std::vector<std::string> codes = [] {
    std::vector<std::string> out;
    for (const auto& spec : guide_table()) out.push_back(spec.code);
    return out;
  }();
  return codes;
}

}  // namespace

std::span<const std::string> all_codes() { return code_list(); }

PerturbationSpec guide_for(std::string_view code) {
  for (const auto& spec : guide_table()) {
    if (spec.code == code) return spec;
  }
  throw ValidationError("unknown perturbation code '" + std::string(code) + "'");
}

SensitivityMatrix SensitivityMatrix::defaults() {
  SensitivityMatrix m;
  using tasks::TaskKind;
  const auto robust = [&m](TaskKind kind, std::initializer_list<const char*> codes) {
    for (const auto& code : code_list()) m.set(kind, code, true);
    for (const char* code : codes) m.set(kind, code, false);
  };
  robust(TaskKind::summarization, {"C3", "W2"});
  robust(TaskKind::simplification, {"C1", "C2", "C3"});
  robust(TaskKind::classification, {"C3", "S1"});
  return m;
}

bool SensitivityMatrix::sensitive(tasks::TaskKind kind, std::string_view code) const {
  const auto it = cells_.find({static_cast<int>(kind), std::string(code)});
  if (it == cells_.end()) {
    throw ValidationError("sensitivity matrix has no cell for (" +
                          std::string(tasks::to_string(kind)) + ", " + std::string(code) + ")");
  }
  return it->second;
}

void SensitivityMatrix::set(tasks::TaskKind kind, std::string_view code, bool sensitive) {
  guide_for(code);  // validates the code
  cells_[{static_cast<int>(kind), std::string(code)}] = sensitive;
}

std::vector<std::string> SensitivityMatrix::sensitive_codes(tasks::TaskKind kind) const {
  std::vector<std::string> out;
  for (const auto& code : code_list()) {
    if (sensitive(kind, code)) out.push_back(code);
  }
  return out;
}

nlohmann::json PerturbedSample::to_json() const {
  nlohmann::json rounds = nlohmann::json::array();
  for (const auto& r : iterations) {
    rounds.push_back({{"round", r.round},
                      {"guide", r.guide_code},
                      {"skipped", r.skipped},
                      {"sentence_index", r.sentence_index},
                      {"chosen", r.chosen},
                      {"similarity", r.similarity},
                      {"adv_score", r.adv_score}});
  }
  nlohmann::json j{{"source_id", source_id},
                   {"original", original},
                   {"perturbed", perturbed},
                   {"applied_guides", applied_guides},
                   {"iterations", std::move(rounds)},
                   {"gate",
                    {{"kind", std::string(metrics::to_string(gate.kind))},
                     {"value", gate.value},
                     {"threshold", gate.threshold},
                     {"passed", gate.passed}}}};
  if (!references.empty()) {
    j["references"] = references;
  } else {
    j["label"] = label;
  }
  return j;
}

PerturbedSample PerturbedSample::from_json(const nlohmann::json& j) {
  PerturbedSample s;
  s.source_id = j.at("source_id").get<std::string>();
  s.original = j.at("original").get<std::string>();
  s.perturbed = j.at("perturbed").get<std::string>();
  if (j.contains("references")) {
    s.references = j.at("references").get<std::vector<std::string>>();
  } else {
    s.label = j.value("label", "");
  }
  s.applied_guides = j.at("applied_guides").get<std::vector<std::string>>();
  for (const auto& jr : j.at("iterations")) {
    RoundTrace r;
    r.round = jr.at("round").get<int>();
    r.guide_code = jr.at("guide").get<std::string>();
    r.skipped = jr.value("skipped", false);
    r.sentence_index = jr.value("sentence_index", -1);
    r.chosen = jr.at("chosen").get<std::string>();
    r.similarity = jr.at("similarity").get<double>();
    r.adv_score = jr.at("adv_score").get<double>();
    s.iterations.push_back(std::move(r));
  }
  const auto& jg = j.at("gate");
  s.gate.kind = jg.at("kind").get<std::string>() == "semantic"
                    ? metrics::SimilarityKind::semantic
                    : metrics::SimilarityKind::levenshtein;
  s.gate.value = jg.at("value").get<double>();
  s.gate.threshold = jg.at("threshold").get<double>();
  s.gate.passed = jg.at("passed").get<bool>();
  return s;
}

tasks::Sample PerturbedSample::as_sample() const {
  tasks::Sample s;
  s.id = source_id;
  s.input = perturbed;
  s.label = label;
  s.references = references;
  return s;
}

const std::string& default_perturb_template() {
  static const std::string tmpl =
      "{guide}\n\nText:\n{input}\n\nReply with only the rewritten text.";
  return tmpl;
}

namespace {

std::string expand_perturb_template(const std::string& tmpl, const PerturbationSpec& spec,
                                    const std::string& input) {
  std::string out = tmpl;
  const auto replace_all = [&out](std::string_view key, const std::string& value) {
    std::size_t pos = 0;
    while ((pos = out.find(key, pos)) != std::string::npos) {
      out.replace(pos, key.size(), value);
      pos += value.size();
    }
  };
  replace_all("{guide}", spec.guide_text);
  replace_all("{input}", input);
  return out;
}

}  // namespace

std::vector<std::string> perturb_once(const std::string& x, const PerturbationSpec& spec,
                                      int k, backend::Backend& backend,
                                      const EngineConfig& cfg, std::uint64_t seed) {
  if (x.empty()) {
    throw ValidationError("perturb_once: empty input text");
  }
  if (k < 1) {
    throw ValidationError("perturb_once: candidate count must be >= 1");
  }
  const std::string& tmpl =
      cfg.perturb_template.empty() ? default_perturb_template() : cfg.perturb_template;

  std::vector<std::string> candidates;
  std::unordered_set<std::string> seen;
  for (int i = 0; i < k; ++i) {
    backend::CompletionRequest request;
    request.user_text = expand_perturb_template(tmpl, spec, x);
    request.temperature = cfg.gen_temperature;
    request.top_p = cfg.gen_top_p;
    request.max_output_tokens = cfg.max_output_tokens;
    request.seed = text::mix_seed(seed, static_cast<std::uint64_t>(i));
    std::string candidate = backend.complete(request).text;
    if (candidate.empty() || candidate == x) continue;
    if (seen.insert(candidate).second) {
      candidates.push_back(std::move(candidate));
    }
  }
  return candidates;
}

std::vector<GatedCandidate> gate(std::span<const std::string> candidates,
                                 const std::string& original, Category category, double eps,
                                 metrics::Embedder& embedder) {
  if (eps <= 0.0 || eps > 1.0) {
    throw ValidationError("gate: eps must be in (0,1]");
  }
  std::vector<GatedCandidate> out;
  if (candidates.empty()) return out;

  const auto kind = category == Category::P1 ? metrics::SimilarityKind::levenshtein
                                             : metrics::SimilarityKind::semantic;
  std::vector<double> values(candidates.size());
  if (category == Category::P1) {
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      values[i] = metrics::lev_similarity(original, candidates[i]);
    }
  } else {
    // One embed batch; extra batch members cannot shift pairwise cosines
    // because absent tokens contribute exact zeros.
    std::vector<std::string> batch;
    batch.reserve(candidates.size() + 1);
    batch.push_back(original);
    for (const auto& c : candidates) batch.push_back(c);
    const auto vecs = embedder.embed(batch);
    const auto& vo = vecs.at(0);
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      if (candidates[i] == original) {
        values[i] = 1.0;
        continue;
      }
      const auto& vc = vecs.at(i + 1);
      double dot = 0.0, no = 0.0, nc = 0.0;
      const std::size_t dim = std::min(vo.size(), vc.size());
      for (std::size_t d = 0; d < dim; ++d) dot += vo[d] * vc[d];
      for (double v : vo) no += v * v;
      for (double v : vc) nc += v * v;
      values[i] = no == 0.0 || nc == 0.0 ? 0.0 : std::clamp(dot / std::sqrt(no * nc), 0.0, 1.0);
    }
  }
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto verdict = metrics::check_similarity(kind, values[i], eps);
    if (verdict.passed) {
      out.push_back({candidates[i], verdict});
    }
  }
  return out;
}

Selection adversarial_select(std::span<const GatedCandidate> candidates,
                             std::string_view prompt_text, const tasks::Sample& sample,
                             const tasks::TaskSpec& task, backend::Backend& backend) {
  if (candidates.empty()) {
    throw ValidationError("adversarial_select: no candidates");
  }
  Selection best;
  double best_similarity = -1.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const double score =
        tasks::score_sample(task, prompt_text, sample, candidates[i].text, backend);
    const double similarity = candidates[i].verdict.value;
    const bool better = i == 0 || score < best.score ||
                        (score == best.score && similarity > best_similarity);
    if (better) {
      best.index = i;
      best.score = score;
      best_similarity = similarity;
    }
  }
  return best;
}

namespace {

PerturbedSample make_result(const tasks::Sample& sample, Category category, double eps) {
  PerturbedSample out;
  out.source_id = sample.id;
  out.original = sample.input;
  out.perturbed = sample.input;
  out.label = sample.label;
  out.references = sample.references;
  out.gate = metrics::SimilarityVerdict{category == Category::P1
                                            ? metrics::SimilarityKind::levenshtein
                                            : metrics::SimilarityKind::semantic,
                                        1.0, eps, true};
  return out;
}

}  // namespace

PerturbedSample perturb_iterative(const tasks::Sample& sample, const PerturbationSpec& spec,
                                  int rounds, std::string_view prompt_text,
                                  const tasks::TaskSpec& task, const EngineConfig& cfg,
                                  backend::Backend& backend) {
  if (rounds < 1) {
    throw ValidationError("perturb_iterative: rounds must be >= 1");
  }
  const double eps = cfg.eps_for(spec.category);
  PerturbedSample out = make_result(sample, spec.category, eps);

  std::string current = sample.input;
  for (int round = 1; round <= rounds; ++round) {
    const std::uint64_t seed = text::mix_seed(
        cfg.seed ^ text::fnv1a(sample.id), text::fnv1a(spec.code) + static_cast<std::uint64_t>(round));
    const auto candidates =
        perturb_once(current, spec, cfg.candidates_per_round, backend, cfg, seed);
    const auto gated = gate(candidates, sample.input, spec.category, eps, backend);
    if (gated.empty()) {
      if (round == 1) {
        throw Error("unperturbable sample '" + sample.id + "': no candidate under guide " +
                    spec.code + " survived the " +
                    std::string(metrics::to_string(out.gate.kind)) + " gate at eps " +
                    std::to_string(eps));
      }
      break;  // keep the last winner
    }
    const auto selection = adversarial_select(gated, prompt_text, sample, task, backend);
    current = gated[selection.index].text;
    out.applied_guides.push_back(spec.code);
    out.iterations.push_back({round, spec.code, false, -1, current,
                              gated[selection.index].verdict.value, selection.score});
    out.gate = gated[selection.index].verdict;
  }
  out.perturbed = current;
  return out;
}

PerturbedSample perturb_long_text(const tasks::Sample& sample, const PerturbationSpec& spec,
                                  int rounds, std::string_view prompt_text,
                                  const tasks::TaskSpec& task, const EngineConfig& cfg,
                                  backend::Backend& backend, std::uint64_t rng_seed) {
  if (rounds < 1) {
    throw ValidationError("perturb_long_text: rounds must be >= 1");
  }
  const double eps = cfg.eps_for(spec.category);
  PerturbedSample out = make_result(sample, spec.category, eps);

  auto split = text::split_sentences(sample.input);
  std::mt19937_64 rng(rng_seed);

  for (int round = 1; round <= rounds; ++round) {
    const auto index = static_cast<std::size_t>(rng() % split.sentences.size());
    const std::string& sentence = split.sentences[index];
    if (sentence.empty()) continue;

    const std::uint64_t seed = text::mix_seed(
        cfg.seed ^ text::fnv1a(sample.id), text::fnv1a(spec.code) + static_cast<std::uint64_t>(round) * 131);
    const auto sentence_candidates =
        perturb_once(sentence, spec, cfg.candidates_per_round, backend, cfg, seed);

    // Reinsert each rewritten sentence; the gate sees the whole text.
    std::vector<std::string> full_candidates;
    full_candidates.reserve(sentence_candidates.size());
    for (const auto& cand : sentence_candidates) {
      auto pieces = split;
      pieces.sentences[index] = cand;
      full_candidates.push_back(pieces.join());
    }
    const auto gated = gate(full_candidates, sample.input, spec.category, eps, backend);
    if (gated.empty()) {
      if (round == 1) {
        throw Error("unperturbable sample '" + sample.id + "': no candidate under guide " +
                    spec.code + " survived the " +
                    std::string(metrics::to_string(out.gate.kind)) + " gate at eps " +
                    std::to_string(eps));
      }
      break;
    }
    const auto selection = adversarial_select(gated, prompt_text, sample, task, backend);
    // Recover the winning sentence text from the winning full text.
    const std::string& winner_full = gated[selection.index].text;
    for (std::size_t c = 0; c < full_candidates.size(); ++c) {
      if (full_candidates[c] == winner_full) {
        split.sentences[index] = sentence_candidates[c];
        break;
      }
    }
    out.applied_guides.push_back(spec.code);
    out.iterations.push_back({round, spec.code, false, static_cast<int>(index), winner_full,
                              gated[selection.index].verdict.value, selection.score});
    out.gate = gated[selection.index].verdict;
  }
  if (out.iterations.empty()) {
    throw Error("unperturbable sample '" + sample.id + "': no round produced a candidate");
  }
  out.perturbed = split.join();
  return out;
}

}  // namespace pertforge::perturb

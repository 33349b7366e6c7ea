#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "pertforge/backend/mock_backend.hpp"
#include "pertforge/error.hpp"
#include "pertforge/metrics/metrics.hpp"
#include "pertforge/perturb/benchmark.hpp"
#include "pertforge/perturb/perturb.hpp"
#include "pertforge/util/text.hpp"
#include "support.hpp"

using namespace pertforge;
using perturb::Category;

namespace {

tasks::TaskSpec cls_task() {
  return tasks::TaskSpec::make(tasks::TaskKind::classification, {"positive", "negative"});
}

perturb::EngineConfig engine_config(std::uint64_t seed = 0) {
  perturb::EngineConfig cfg;
  cfg.seed = seed;
  return cfg;
}

// Scripted appender plus a constant scorer, enough for iterative runs.
backend::MockBackend appender_mock(const std::string& marker) {
  nlohmann::json script{
      {"version", 1},
      {"rules",
       {test_support::perturb_rule("append", marker),
        {{"name", "score"}, {"match", {{"system", "[\\s\\S]+"}}}, {"responses", {"positive"}}}}}};
  return backend::MockBackend::from_script(script);
}

}  // namespace

TEST_CASE("sentence splitting reassembles byte-for-byte") {
  const std::string text = "One two. Three four!  Five six?\nSeven eight. No terminal here";
  const auto split = text::split_sentences(text);
  CHECK(split.sentences.size() == 5);
  CHECK(split.join() == text);
  CHECK(split.sentences[0] == "One two.");
  CHECK(split.sentences[4] == "No terminal here");

  const auto single = text::split_sentences("no punctuation at all");
  CHECK(single.sentences.size() == 1);
  CHECK(single.join() == "no punctuation at all");

  const auto ellipsis = text::split_sentences("Wait... Done.");
  CHECK(ellipsis.sentences.size() == 2);
  CHECK(ellipsis.sentences[0] == "Wait...");
  CHECK(ellipsis.join() == "Wait... Done.");
}

TEST_CASE("engine defaults: generation sampling and similarity budgets") {
  const perturb::EngineConfig cfg;
  CHECK(cfg.gen_temperature == 1.0);
  CHECK(cfg.gen_top_p == 0.95);
  CHECK(cfg.eps_p1 == 0.90);
  CHECK(cfg.eps_p2 == 0.80);
  CHECK(cfg.candidates_per_round == 4);
  CHECK(cfg.rounds == 3);
}

TEST_CASE("guide_for reproduces the taxonomy") {
  const auto c1 = perturb::guide_for("C1");
  CHECK(c1.category == Category::P1);
  CHECK(c1.description == "Change words to have typos");
  const auto s2 = perturb::guide_for("S2");
  CHECK(s2.category == Category::P2);
  CHECK(s2.description == "Paraphrase the sentence");
  CHECK_THROWS_WITH_AS(perturb::guide_for("Z9"), doctest::Contains("unknown perturbation code"),
                       ValidationError);

  // code -> category mapping, all nine
  const std::map<std::string, Category> expected = {
      {"C1", Category::P1}, {"C2", Category::P1}, {"C3", Category::P1},
      {"W1", Category::P2}, {"W2", Category::P2}, {"W3", Category::P2},
      {"S1", Category::P1}, {"S2", Category::P2}, {"S3", Category::P2}};
  CHECK(perturb::all_codes().size() == 9);
  for (const auto& code : perturb::all_codes()) {
    CHECK(perturb::guide_for(code).category == expected.at(code));
    CHECK_FALSE(perturb::guide_for(code).guide_text.empty());
  }
}

TEST_CASE("default sensitivity matrix matches the shipped table") {
  const auto m = perturb::SensitivityMatrix::defaults();
  using tasks::TaskKind;
  const std::map<std::string, std::array<bool, 3>> expected = {
      // {summarization, simplification, classification}
      {"C1", {true, false, true}},  {"C2", {true, false, true}},
      {"C3", {false, false, false}}, {"W1", {true, true, true}},
      {"W2", {false, true, true}},  {"W3", {true, true, true}},
      {"S1", {true, true, false}},  {"S2", {true, true, true}},
      {"S3", {true, true, true}}};
  for (const auto& [code, flags] : expected) {
    CHECK(m.sensitive(TaskKind::summarization, code) == flags[0]);
    CHECK(m.sensitive(TaskKind::simplification, code) == flags[1]);
    CHECK(m.sensitive(TaskKind::classification, code) == flags[2]);
  }
  CHECK(m.sensitive_codes(TaskKind::summarization) ==
        std::vector<std::string>{"C1", "C2", "W1", "W3", "S1", "S2", "S3"});
  CHECK(m.sensitive_codes(TaskKind::classification) ==
        std::vector<std::string>{"C1", "C2", "W1", "W2", "W3", "S2", "S3"});
}

TEST_CASE("perturb_once") {
  auto mock = appender_mock("@@");
  const auto spec = perturb::guide_for("C3");
  const auto cfg = engine_config();
  const auto one = perturb::perturb_once("hello", spec, 1, mock, cfg, 1);
  CHECK(one == std::vector<std::string>{"hello@@"});

  // k calls with the same deterministic transform collapse to one candidate
  const auto dup = perturb::perturb_once("hello", spec, 3, mock, cfg, 1);
  CHECK(dup.size() == 1);

  // echo mock: identity candidates are dropped
  nlohmann::json echo{{"version", 1},
                      {"rules", {test_support::perturb_rule("none")}}};
  auto echo_mock = backend::MockBackend::from_script(echo);
  CHECK(perturb::perturb_once("hello", spec, 3, echo_mock, cfg, 1).empty());

  // distinct candidates survive: typo transform varies with the seed
  nlohmann::json typo{{"version", 1}, {"rules", {test_support::perturb_rule("typo")}}};
  auto typo_mock = backend::MockBackend::from_script(typo);
  const auto many =
      perturb::perturb_once("a reasonably long sample sentence", spec, 3, typo_mock, cfg, 5);
  CHECK(many.size() >= 2);

  CHECK_THROWS_AS(perturb::perturb_once("", spec, 1, mock, cfg, 1), ValidationError);
  CHECK_THROWS_AS(perturb::perturb_once("x", spec, 0, mock, cfg, 1), ValidationError);
}

TEST_CASE("gate filters by the category's similarity") {
  metrics::TfEmbedder tf;
  const std::string original = "abcdefghij";
  const std::vector<std::string> candidates = {"abcdefghiX", "abcdefgXYZ"};
  // 1 of 10 chars changed -> 0.9 passes at 0.90; 3 of 10 -> 0.7 filtered
  const auto gated = perturb::gate(candidates, original, Category::P1, 0.90, tf);
  REQUIRE(gated.size() == 1);
  CHECK(gated[0].text == "abcdefghiX");
  CHECK(gated[0].verdict.value == doctest::Approx(0.9));
  CHECK(gated[0].verdict.kind == metrics::SimilarityKind::levenshtein);

  // P2: identical candidate passes with value 1.0
  const std::vector<std::string> same = {original};
  const auto sem = perturb::gate(same, original, Category::P2, 0.80, tf);
  REQUIRE(sem.size() == 1);
  CHECK(sem[0].verdict.value == 1.0);
  CHECK(sem[0].verdict.kind == metrics::SimilarityKind::semantic);

  CHECK(perturb::gate({}, original, Category::P1, 0.9, tf).empty());
  CHECK_THROWS_AS(perturb::gate(candidates, original, Category::P1, 0.0, tf),
                  ValidationError);
}

namespace {

// Graded scoring: a candidate containing "[k]" earns rouge1 f1 = 2k/(5+k)
// against the fixed reference below.
const char* kGradedReference = "alpha beta gamma delta epsilon";

backend::MockBackend graded_mock() {
  nlohmann::json rules = nlohmann::json::array();
  const std::vector<std::string> partials = {
      "zzz yyy", "alpha", "alpha beta", "alpha beta gamma", "alpha beta gamma delta",
      "alpha beta gamma delta epsilon"};
  for (int k = 0; k <= 5; ++k) {
    rules.push_back({{"name", "grade" + std::to_string(k)},
                     {"match", {{"user", "\\[" + std::to_string(k) + "\\]"}}},
                     {"responses", {partials[static_cast<std::size_t>(k)]}}});
  }
  return backend::MockBackend::from_script({{"version", 1}, {"rules", rules}});
}

double graded_score(int k) {
  return k == 0 ? 0.0 : 2.0 * k / (5.0 + k);
}

}  // namespace

TEST_CASE("adversarial_select returns the argmin with the documented tie-break") {
  auto mock = graded_mock();
  const auto task = tasks::TaskSpec::make(tasks::TaskKind::summarization);
  tasks::Sample sample{"s", "irrelevant", "", {kGradedReference}};

  auto cand = [](int k, double sim) {
    return perturb::GatedCandidate{
        "input [" + std::to_string(k) + "]",
        metrics::check_similarity(metrics::SimilarityKind::levenshtein, sim, 0.5)};
  };

  // scores {0.8.., 0.5.., 0.6..}: k = 4, 2, 3
  const std::vector<perturb::GatedCandidate> a = {cand(4, 0.9), cand(2, 0.9), cand(3, 0.9)};
  const auto sel_a = perturb::adversarial_select(a, "summarize", sample, task, mock);
  CHECK(sel_a.index == 1);
  CHECK(sel_a.score == doctest::Approx(graded_score(2)));

  // equal scores: higher similarity wins
  const std::vector<perturb::GatedCandidate> b = {cand(2, 0.91), cand(2, 0.95)};
  CHECK(perturb::adversarial_select(b, "summarize", sample, task, mock).index == 1);

  // equal scores and similarities: stable input order
  const std::vector<perturb::GatedCandidate> c = {cand(2, 0.9), cand(2, 0.9)};
  CHECK(perturb::adversarial_select(c, "summarize", sample, task, mock).index == 0);

  const std::vector<perturb::GatedCandidate> single = {cand(1, 0.9)};
  CHECK(perturb::adversarial_select(single, "summarize", sample, task, mock).index == 0);

  CHECK_THROWS_AS(perturb::adversarial_select({}, "p", sample, task, mock), ValidationError);

  // randomized trials against an independent argmin
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<perturb::GatedCandidate> cands;
    const std::size_t n = 1 + rng() % 6;
    for (std::size_t i = 0; i < n; ++i) {
      cands.push_back(cand(static_cast<int>(rng() % 6), 0.80 + 0.01 * (rng() % 20)));
    }
    std::size_t want = 0;
    auto key = [&](std::size_t i) {
      const int k = cands[i].text[cands[i].text.size() - 2] - '0';
      return std::pair<double, double>(graded_score(k), -cands[i].verdict.value);
    };
    for (std::size_t i = 1; i < n; ++i) {
      if (key(i) < key(want)) want = i;
    }
    const auto got = perturb::adversarial_select(cands, "summarize", sample, task, mock);
    CHECK(got.index == want);
  }
}

TEST_CASE("perturb_iterative accumulates rounds") {
  auto mock = appender_mock("#");
  const auto spec = perturb::guide_for("C3");
  auto cfg = engine_config();
  tasks::Sample sample{"s1", "a sufficiently long input sentence for gating", "positive", {}};

  const auto out = perturb::perturb_iterative(sample, spec, 3, "judge", cls_task(), cfg, mock);
  CHECK(out.iterations.size() == 3);
  CHECK(out.applied_guides == std::vector<std::string>{"C3", "C3", "C3"});
  CHECK(out.perturbed == sample.input + "###");
  CHECK(out.gate.passed);
  CHECK(out.source_id == "s1");
  CHECK(out.original == sample.input);
  // round t feeds round t+1
  CHECK(out.iterations[0].chosen == sample.input + "#");
  CHECK(out.iterations[1].chosen == sample.input + "##");
}

TEST_CASE("perturb_iterative stops early when a later round gates empty") {
  // round 1 appends; once the marker is present the rewrite is garbage and
  // fails the gate
  nlohmann::json script{
      {"version", 1},
      {"rules",
       {{{"name", "poison"},
         {"match", {{"user", "Text:\\n[\\s\\S]*@@[\\s\\S]*Reply with only the rewritten text\\."}}},
         {"responses", {"completely unrelated replacement text"}}},
        test_support::perturb_rule("append", "@@"),
        {{"name", "score"}, {"match", {{"system", "[\\s\\S]+"}}}, {"responses", {"positive"}}}}}};
  auto mock = backend::MockBackend::from_script(script);
  const auto spec = perturb::guide_for("C3");
  auto cfg = engine_config();
  tasks::Sample sample{"s1", "a sufficiently long input sentence for gating", "positive", {}};

  const auto out = perturb::perturb_iterative(sample, spec, 3, "judge", cls_task(), cfg, mock);
  CHECK(out.iterations.size() == 1);
  CHECK(out.perturbed == sample.input + "@@");
}

TEST_CASE("perturb_iterative errors when round one yields nothing") {
  nlohmann::json script{{"version", 1},
                        {"rules",
                         {{{"name", "garbage"},
                           {"match", {{"user", "Reply with only the rewritten text\\."}}},
                           {"responses", {"totally different text with nothing in common"}}}}}};
  auto mock = backend::MockBackend::from_script(script);
  const auto spec = perturb::guide_for("C1");
  auto cfg = engine_config();
  tasks::Sample sample{"s1", "short original text", "positive", {}};
  CHECK_THROWS_WITH_AS(
      perturb::perturb_iterative(sample, spec, 2, "judge", cls_task(), cfg, mock),
      doctest::Contains("unperturbable sample"), Error);
}

TEST_CASE("perturb_iterative with one round equals one manual engine pass") {
  auto mock = appender_mock("%");
  const auto spec = perturb::guide_for("C3");
  auto cfg = engine_config(3);
  tasks::Sample sample{"sX", "another long enough sentence to gate safely", "positive", {}};

  const auto via_loop =
      perturb::perturb_iterative(sample, spec, 1, "judge", cls_task(), cfg, mock);

  const std::uint64_t seed =
      text::mix_seed(cfg.seed ^ text::fnv1a(sample.id), text::fnv1a(spec.code) + 1);
  const auto cands =
      perturb::perturb_once(sample.input, spec, cfg.candidates_per_round, mock, cfg, seed);
  const auto gated = perturb::gate(cands, sample.input, spec.category, cfg.eps_p1, mock);
  const auto sel = perturb::adversarial_select(gated, "judge", sample, cls_task(), mock);
  CHECK(via_loop.perturbed == gated[sel.index].text);
}

TEST_CASE("perturb_long_text changes exactly one sentence per round") {
  nlohmann::json script{
      {"version", 1},
      {"rules",
       {test_support::perturb_rule("typo"),
        {{"name", "score"},
         {"match", {{"system", "[\\s\\S]+"}, {"user", "([\\s\\S]+)"}}},
         {"responses", {"{u1}"}}}}}};
  auto mock = backend::MockBackend::from_script(script);
  const auto task = tasks::TaskSpec::make(tasks::TaskKind::summarization);
  auto cfg = engine_config();
  cfg.eps_p1 = 0.98;

  std::mt19937_64 rng(4);
  std::string doc;
  for (int s = 0; s < 5; ++s) {
    if (s) doc += ' ';
    doc += test_support::make_sentence(rng, 12);
  }
  tasks::Sample sample{"doc1", doc, "", {"a reference summary"}};

  const auto out =
      perturb::perturb_long_text(sample, perturb::guide_for("C1"), 3, "summarize", task, cfg,
                                 mock, 11);
  CHECK(!out.iterations.empty());
  // per recorded round, exactly one sentence differs from the previous state
  std::string prev = sample.input;
  for (const auto& round : out.iterations) {
    const auto before = text::split_sentences(prev);
    const auto after = text::split_sentences(round.chosen);
    REQUIRE(before.sentences.size() == after.sentences.size());
    int diff = 0;
    for (std::size_t i = 0; i < before.sentences.size(); ++i) {
      if (before.sentences[i] != after.sentences[i]) ++diff;
    }
    CHECK(diff == 1);
    CHECK(round.sentence_index >= 0);
    prev = round.chosen;
  }
  CHECK(out.perturbed == prev);

  // same rng seed -> same chosen sentence indices
  const auto again =
      perturb::perturb_long_text(sample, perturb::guide_for("C1"), 3, "summarize", task, cfg,
                                 mock, 11);
  REQUIRE(again.iterations.size() == out.iterations.size());
  for (std::size_t i = 0; i < out.iterations.size(); ++i) {
    CHECK(again.iterations[i].sentence_index == out.iterations[i].sentence_index);
  }

  // degenerate single-sentence input
  tasks::Sample one{"doc2", "just one long sentence without any terminal breaks here", "",
                    {"ref"}};
  cfg.eps_p1 = 0.90;
  const auto deg = perturb::perturb_long_text(one, perturb::guide_for("C1"), 1, "summarize",
                                              task, cfg, mock, 2);
  CHECK(deg.iterations.size() == 1);
  CHECK(deg.iterations[0].sentence_index == 0);
  CHECK(deg.perturbed != one.input);
}

TEST_CASE("perturbation flows through non-ASCII text with scalar-based gating") {
  auto mock = appender_mock("\xC2\xBB");  // a two-byte scalar marker
  const auto spec = perturb::guide_for("C3");
  auto cfg = engine_config();
  // 30 scalars in 60 bytes: similarity math must count scalars, not bytes
  const std::string input = "\xC3\xA9\xC3\xA9\xC3\xA9\xC3\xA9\xC3\xA9"
                            "\xC3\xA9\xC3\xA9\xC3\xA9\xC3\xA9\xC3\xA9"
                            "\xC3\xA9\xC3\xA9\xC3\xA9\xC3\xA9\xC3\xA9"
                            "\xC3\xA9\xC3\xA9\xC3\xA9\xC3\xA9\xC3\xA9"
                            "\xC3\xA9\xC3\xA9\xC3\xA9\xC3\xA9\xC3\xA9"
                            "\xC3\xA9\xC3\xA9\xC3\xA9\xC3\xA9\xC3\xA9";
  tasks::Sample sample{"u1", input, "positive", {}};
  const auto out = perturb::perturb_iterative(sample, spec, 1, "judge", cls_task(), cfg, mock);
  CHECK(out.perturbed == input + "\xC2\xBB");
  // one extra scalar over 31: 1 - 1/31
  CHECK(out.gate.value == doctest::Approx(1.0 - 1.0 / 31).epsilon(1e-12));
}

TEST_CASE("emitted samples always satisfy their category gate") {
  // compact version of the acceptance sweep
  nlohmann::json script{
      {"version", 1},
      {"rules",
       {test_support::perturb_rule("typo"),
        {{"name", "score"}, {"match", {{"system", "[\\s\\S]+"}}}, {"responses", {"positive"}}}}}};
  auto mock = backend::MockBackend::from_script(script);
  auto cfg = engine_config();
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    std::mt19937_64 rng(seed);
    tasks::Sample sample{"s" + std::to_string(seed), test_support::make_sentence(rng, 14),
                         "positive", {}};
    cfg.seed = seed;
    const auto p1 = perturb::perturb_iterative(sample, perturb::guide_for("C1"), 3, "judge",
                                               cls_task(), cfg, mock);
    CHECK(metrics::lev_similarity(p1.original, p1.perturbed) >= cfg.eps_p1);

    const auto p2 = perturb::perturb_iterative(sample, perturb::guide_for("W1"), 2, "judge",
                                               cls_task(), cfg, mock);
    metrics::TfEmbedder tf;
    CHECK(metrics::semantic_similarity(p2.original, p2.perturbed, tf) >= cfg.eps_p2);
  }
}

TEST_CASE("emitted samples never score above the clean input") {
  // the scorer answers the gold label only while the keyword survives; the
  // typo rewrites can only damage it, so argmin selection cannot improve
  // the score
  nlohmann::json script{
      {"version", 1},
      {"rules",
       {test_support::perturb_rule("typo"),
        {{"name", "keyword"},
         {"match", {{"system", "[\\s\\S]+"}, {"user", "pristine"}}},
         {"responses", {"positive"}}},
        {{"name", "fallback"},
         {"match", {{"system", "[\\s\\S]+"}}},
         {"responses", {"negative"}}}}}};
  auto mock = backend::MockBackend::from_script(script);
  auto cfg = engine_config();
  const auto task = cls_task();
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    tasks::Sample sample{"k" + std::to_string(seed),
                         "the pristine garden near the harbor stayed open", "positive", {}};
    cfg.seed = seed;
    const auto out = perturb::perturb_iterative(sample, perturb::guide_for("C1"), 2, "judge",
                                                task, cfg, mock);
    const double clean = tasks::score_sample(task, "judge", sample, sample.input, mock);
    const double perturbed = tasks::score_sample(task, "judge", sample, out.perturbed, mock);
    CHECK(clean == 1.0);
    CHECK(perturbed <= clean);
    CHECK(perturbed == out.iterations.back().adv_score);
  }
}

TEST_CASE("build_benchmark honors the sensitivity matrix") {
  nlohmann::json script{
      {"version", 1},
      {"rules",
       {test_support::perturb_rule("typo"),
        {{"name", "score"}, {"match", {{"system", "[\\s\\S]+"}}}, {"responses", {"positive"}}}}}};
  auto mock = backend::MockBackend::from_script(script);

  tasks::Dataset ds;
  ds.name = "toy";
  std::mt19937_64 rng(1);
  for (int i = 0; i < 4; ++i) {
    ds.samples.push_back({"t" + std::to_string(i), test_support::make_sentence(rng, 16),
                          i % 2 ? "negative" : "positive", {}});
  }
  perturb::BuildConfig build;
  build.engine = engine_config(5);
  build.initial_prompt = "judge";

  std::vector<perturb::PerturbationSpec> specs;
  for (const auto& code : perturb::all_codes()) specs.push_back(perturb::guide_for(code));

  const auto result = perturb::build_benchmark(ds, cls_task(), specs,
                                               perturb::SensitivityMatrix::defaults(), build,
                                               mock);
  std::vector<std::string> built;
  for (const auto& subset : result.subsets) built.push_back(subset.code);
  CHECK(built == std::vector<std::string>{"C1", "C2", "W1", "W2", "W3", "S2", "S3"});

  build.force_all = true;
  const auto forced = perturb::build_benchmark(ds, cls_task(), specs,
                                               perturb::SensitivityMatrix::defaults(), build,
                                               mock);
  CHECK(forced.subsets.size() == 9);
}

TEST_CASE("similarity report formatting") {
  perturb::PerturbedDataset result;
  result.dataset = "toy";
  perturb::SubDataset a;
  a.code = "C1";
  a.mean_lev_pct = 92.0;
  a.mean_sem_pct = 88.123456;
  result.subsets.push_back(a);
  const auto csv = perturb::similarity_report_csv(result);
  CHECK(csv == "dataset,code,lev_sim_pct,sem_sim_pct\ntoy,C1,92.00,88.12\n");
}

TEST_CASE("similarity means: identity dataset reads 100.00 and means average") {
  metrics::TfEmbedder tf;
  perturb::SubDataset subset;
  subset.code = "C1";
  perturb::PerturbedSample s1;
  s1.original = s1.perturbed = "unchanged text";
  subset.samples.push_back(s1);
  perturb::compute_similarity_means(subset, tf);
  CHECK(subset.mean_lev_pct == doctest::Approx(100.0));
  CHECK(subset.mean_sem_pct == doctest::Approx(100.0));

  // two samples with lev similarities 0.90 and 0.94 -> 92.00
  perturb::SubDataset two;
  two.code = "C2";
  perturb::PerturbedSample a, b;
  a.original = "aaaaaaaaaa";
  a.perturbed = "aaaaaaaaab";  // 0.9
  b.original = "aaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaa";  // 50 chars
  b.perturbed = "aaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaabbb";  // 0.94
  two.samples = {a, b};
  perturb::compute_similarity_means(two, tf);
  CHECK(two.mean_lev_pct == doctest::Approx(92.0));
}

TEST_CASE("perturbed sample JSON round trip") {
  perturb::PerturbedSample s;
  s.source_id = "id1";
  s.original = "orig";
  s.perturbed = "pert";
  s.label = "positive";
  s.applied_guides = {"C1", "C1"};
  s.iterations.push_back({1, "C1", false, 2, "pert", 0.93, 0.5});
  s.gate = metrics::check_similarity(metrics::SimilarityKind::levenshtein, 0.93, 0.9);
  const auto j = s.to_json();
  const auto back = perturb::PerturbedSample::from_json(j);
  CHECK(back.source_id == s.source_id);
  CHECK(back.perturbed == s.perturbed);
  CHECK(back.applied_guides == s.applied_guides);
  CHECK(back.iterations.size() == 1);
  CHECK(back.iterations[0].sentence_index == 2);
  CHECK(back.gate.passed);
  CHECK(back.to_json() == j);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "golden.hpp"
#include "oracles.hpp"
#include "pertforge/error.hpp"
#include "pertforge/metrics/metrics.hpp"
#include "pertforge/metrics/similarity.hpp"
#include "pertforge/util/text.hpp"

using namespace pertforge;

namespace {

std::string random_string(std::mt19937_64& rng, std::size_t max_len,
                          std::string_view alphabet) {
  const std::size_t len = rng() % (max_len + 1);
  std::string out;
  for (std::size_t i = 0; i < len; ++i) out += alphabet[rng() % alphabet.size()];
  return out;
}

}  // namespace

TEST_CASE("levenshtein basics") {
  CHECK(metrics::levenshtein("abc", "abc") == 0);
  CHECK(metrics::levenshtein("", "abc") == 3);
  CHECK(metrics::levenshtein("abc", "") == 3);
  CHECK(metrics::levenshtein("kitten", "sitting") == 3);
  CHECK(metrics::levenshtein("", "") == 0);
}

TEST_CASE("levenshtein counts unicode scalars, not bytes") {
  // one accented letter differs: 2 bytes, 1 scalar
  CHECK(metrics::levenshtein("h\xc3\xa9llo", "hello") == 1);
  CHECK(metrics::lev_similarity("h\xc3\xa9llo", "hello") == doctest::Approx(0.8));
}

TEST_CASE("exhaustive search agrees with its memoized form on tiny strings") {
  std::vector<std::string> tiny;
  const std::string alphabet = "abc";
  tiny.emplace_back("");
  for (std::size_t len = 1; len <= 3; ++len) {
    std::size_t count = 1;
    for (std::size_t i = 0; i < len; ++i) count *= 3;
    for (std::size_t v = 0; v < count; ++v) {
      std::string s;
      std::size_t x = v;
      for (std::size_t i = 0; i < len; ++i) {
        s += alphabet[x % 3];
        x /= 3;
      }
      tiny.push_back(s);
    }
  }
  for (const auto& a : tiny) {
    for (const auto& b : tiny) {
      const auto ca = text::to_codepoints(a);
      const auto cb = text::to_codepoints(b);
      CHECK(testing_oracles::lev_exhaustive(ca, cb) ==
            testing_oracles::lev_edit_script_oracle(a, b));
    }
  }
}

TEST_CASE("levenshtein matches the edit-script oracle on random strings") {
  std::mt19937_64 rng(42);
  for (int i = 0; i < 2000; ++i) {
    const auto a = random_string(rng, 9, "abcxy");
    const auto b = random_string(rng, 9, "abcxy");
    CHECK(metrics::levenshtein(a, b) == testing_oracles::lev_edit_script_oracle(a, b));
  }
}

TEST_CASE("levenshtein is a metric") {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 500; ++i) {
    const auto a = random_string(rng, 6, "abc");
    const auto b = random_string(rng, 6, "abc");
    const auto c = random_string(rng, 6, "abc");
    const auto dab = metrics::levenshtein(a, b);
    const auto dba = metrics::levenshtein(b, a);
    const auto dac = metrics::levenshtein(a, c);
    const auto dbc = metrics::levenshtein(b, c);
    CHECK(dab == dba);
    CHECK((dab == 0) == (a == b));
    CHECK(dac <= dab + dbc);
  }
}

TEST_CASE("lev_similarity") {
  CHECK(metrics::lev_similarity("x", "x") == 1.0);
  CHECK(metrics::lev_similarity("abcd", "abce") == doctest::Approx(0.75));
  CHECK(metrics::lev_similarity("", "") == 1.0);
  std::mt19937_64 rng(11);
  for (int i = 0; i < 300; ++i) {
    const auto a = random_string(rng, 8, "ab");
    const auto b = random_string(rng, 8, "ab");
    const double sim = metrics::lev_similarity(a, b);
    CHECK(sim >= 0.0);
    CHECK(sim <= 1.0);
    CHECK((sim == 1.0) == (a == b));
  }
}

TEST_CASE("rouge matches the hand-enumerated golden set") {
  for (const auto& c : golden::rouge_cases()) {
    const auto r1 = metrics::rouge(c.candidate, c.reference, metrics::RougeVariant::rouge1);
    const auto r2 = metrics::rouge(c.candidate, c.reference, metrics::RougeVariant::rouge2);
    const auto rl = metrics::rouge(c.candidate, c.reference, metrics::RougeVariant::rougeL);
    CAPTURE(c.candidate);
    CAPTURE(c.reference);
    CHECK(r1.precision == doctest::Approx(c.r1[0]).epsilon(1e-12));
    CHECK(r1.recall == doctest::Approx(c.r1[1]).epsilon(1e-12));
    CHECK(r1.f1 == doctest::Approx(c.r1[2]).epsilon(1e-12));
    CHECK(r2.precision == doctest::Approx(c.r2[0]).epsilon(1e-12));
    CHECK(r2.recall == doctest::Approx(c.r2[1]).epsilon(1e-12));
    CHECK(r2.f1 == doctest::Approx(c.r2[2]).epsilon(1e-12));
    CHECK(rl.precision == doctest::Approx(c.rl[0]).epsilon(1e-12));
    CHECK(rl.recall == doctest::Approx(c.rl[1]).epsilon(1e-12));
    CHECK(rl.f1 == doctest::Approx(c.rl[2]).epsilon(1e-12));
  }
}

TEST_CASE("rouge identity and symmetry properties") {
  static const std::vector<std::string> bank = {"sun", "moon", "tide", "dune", "grove"};
  std::mt19937_64 rng(5);
  for (int i = 0; i < 200; ++i) {
    std::string a, b;
    const std::size_t la = 1 + rng() % 6, lb = 1 + rng() % 6;
    for (std::size_t k = 0; k < la; ++k) a += (k ? " " : "") + bank[rng() % bank.size()];
    for (std::size_t k = 0; k < lb; ++k) b += (k ? " " : "") + bank[rng() % bank.size()];
    for (auto variant : {metrics::RougeVariant::rouge1, metrics::RougeVariant::rouge2,
                         metrics::RougeVariant::rougeL}) {
      CHECK(metrics::rouge(a, a, variant).f1 == 1.0);
      const auto fwd = metrics::rouge(a, b, variant);
      CHECK(fwd.f1 >= 0.0);
      CHECK(fwd.f1 <= 1.0);
      if (variant == metrics::RougeVariant::rouge1) {
        CHECK(fwd.f1 == doctest::Approx(metrics::rouge(b, a, variant).f1).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("sari hand-frozen triples") {
  // source = candidate = sole reference
  {
    const std::vector<std::string> refs = {"simple text here"};
    const auto s = metrics::sari("simple text here", "simple text here", refs);
    CHECK(s.overall == doctest::Approx(1.0).epsilon(1e-12));
  }
  // candidate equal to the sole reference: every operation agrees
  {
    const std::vector<std::string> refs = {"the large cat"};
    const auto s = metrics::sari("the big cat", "the large cat", refs);
    CHECK(s.keep == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s.add == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s.del == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s.overall == doctest::Approx(1.0).epsilon(1e-12));
  }
  // worked out by hand, order by order
  {
    const std::vector<std::string> refs = {"a cat sat on the mat"};
    const auto s = metrics::sari("the cat sat on the mat", "the cat sat on mat", refs);
    CHECK(s.keep == doctest::Approx((1.0 + 4.0 / 7 + 2.0 / 5 + 0.0) / 4).epsilon(1e-12));
    CHECK(s.del == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(s.add == doctest::Approx(0.0).epsilon(1e-12));
  }
  // empty candidate exercises the delete component
  {
    const std::vector<std::string> refs = {"the big cat"};
    const auto s = metrics::sari("the big cat", "", refs);
    CHECK(s.keep == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(s.del == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(s.add == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s.overall == doctest::Approx(0.5).epsilon(1e-12));
  }
  // duplicated tokens plus two references: counts scale by the reference
  // count and reference totals average out
  {
    const std::vector<std::string> refs = {"a b", "a a b"};
    const auto s = metrics::sari("a a b", "a b", refs);
    CHECK(s.keep == doctest::Approx((8.0 / 9 + 4.0 / 5 + 0.0 + 1.0) / 4).epsilon(1e-12));
    CHECK(s.del == doctest::Approx(5.0 / 8).epsilon(1e-12));
    CHECK(s.add == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("sari matches the definition oracle on the golden triples") {
  for (const auto& t : golden::sari_triples()) {
    const auto got = metrics::sari(t.source, t.candidate, t.references);
    const auto want =
        testing_oracles::sari_definition_oracle(t.source, t.candidate, t.references);
    CAPTURE(t.source);
    CAPTURE(t.candidate);
    CHECK(got.keep == doctest::Approx(want.keep).epsilon(1e-10));
    CHECK(got.add == doctest::Approx(want.add).epsilon(1e-10));
    CHECK(got.del == doctest::Approx(want.del).epsilon(1e-10));
    CHECK(got.overall == doctest::Approx(want.overall).epsilon(1e-10));
    CHECK(got.overall == doctest::Approx((got.keep + got.add + got.del) / 3).epsilon(1e-12));
  }
}

TEST_CASE("sari is invariant under reference reordering") {
  const std::vector<std::string> refs = {"the old man strolled", "an old man walked slowly",
                                         "the old man walked"};
  std::vector<std::string> reversed(refs.rbegin(), refs.rend());
  const auto a = metrics::sari("the old man walked slowly", "the old man walked", refs);
  const auto b = metrics::sari("the old man walked slowly", "the old man walked", reversed);
  CHECK(a.keep == doctest::Approx(b.keep).epsilon(1e-12));
  CHECK(a.add == doctest::Approx(b.add).epsilon(1e-12));
  CHECK(a.del == doctest::Approx(b.del).epsilon(1e-12));
}

TEST_CASE("sari rejects an empty reference list") {
  CHECK_THROWS_AS(metrics::sari("a", "b", {}), ValidationError);
}

TEST_CASE("sari components stay in [0,1] on random inputs") {
  static const std::vector<std::string> bank = {"sun", "moon", "tide", "dune", "grove", "ash"};
  std::mt19937_64 rng(31);
  auto sentence = [&](std::size_t max_len) {
    std::string out;
    const std::size_t n = rng() % (max_len + 1);
    for (std::size_t i = 0; i < n; ++i) out += (i ? " " : "") + bank[rng() % bank.size()];
    return out;
  };
  for (int i = 0; i < 200; ++i) {
    const auto source = sentence(8);
    const auto candidate = sentence(8);
    const std::vector<std::string> refs = {sentence(8), sentence(8)};
    const auto s = metrics::sari(source, candidate, refs);
    for (double v : {s.keep, s.add, s.del, s.overall}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("accuracy") {
  const std::vector<std::string> labels = {"positive", "negative"};
  const std::vector<std::string> gold = {"positive", "negative", "positive", "negative"};
  CHECK(metrics::accuracy(std::vector<std::string>{"positive", "negative", "positive",
                                                   "negative"},
                          gold, labels) == 1.0);
  CHECK(metrics::accuracy(std::vector<std::string>{"positive", "negative", "positive",
                                                   "positive"},
                          gold, labels) == 0.75);
  // free-form text is not a bare label, so it scores as wrong
  const std::vector<std::string> gold2 = {"positive", "positive"};
  CHECK(metrics::accuracy(std::vector<std::string>{"positive", "I think positive!"}, gold2,
                          labels) == 0.5);
  // normalization: case and punctuation
  CHECK(metrics::accuracy(std::vector<std::string>{"Positive."}, {{"positive"}}, labels) ==
        1.0);
  CHECK_THROWS_AS(metrics::accuracy(std::vector<std::string>{"positive"}, gold, labels),
                  ValidationError);
}

TEST_CASE("semantic similarity with the term-frequency fallback") {
  metrics::TfEmbedder tf;
  CHECK(metrics::semantic_similarity("same text", "same text", tf) == 1.0);
  CHECK(metrics::semantic_similarity("aa bb", "cc dd", tf) == 0.0);
  CHECK(metrics::semantic_similarity("a b", "a c", tf) == doctest::Approx(0.5).epsilon(1e-12));
  const double sim = metrics::semantic_similarity("the river is wide", "the river is deep", tf);
  CHECK(sim > 0.0);
  CHECK(sim < 1.0);
}

TEST_CASE("tf embedder returns unit vectors over the batch vocabulary") {
  metrics::TfEmbedder tf;
  const auto vecs = tf.embed({"x y", "x y", "z"});
  CHECK(vecs.size() == 3);
  CHECK(vecs[0] == vecs[1]);
  double norm = 0.0;
  for (double v : vecs[0]) norm += v * v;
  CHECK(norm == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("similarity verdict") {
  const auto pass = metrics::check_similarity(metrics::SimilarityKind::levenshtein, 0.95, 0.9);
  CHECK(pass.passed);
  const auto edge = metrics::check_similarity(metrics::SimilarityKind::semantic, 0.8, 0.8);
  CHECK(edge.passed);  // passed <=> value >= threshold
  const auto fail = metrics::check_similarity(metrics::SimilarityKind::semantic, 0.79, 0.8);
  CHECK_FALSE(fail.passed);
}

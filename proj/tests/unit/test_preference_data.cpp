#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include "doctest.h"
#include "oracles/oracle.hpp"
#include "sarank/distance.hpp"
#include "sarank/error.hpp"
#include "sarank/generators.hpp"
#include "sarank/numeric.hpp"
#include "sarank/preference_data.hpp"

using namespace sarank;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "sarank_pref_tests";
  fs::create_directories(dir);
  return dir / name;
}

std::string random_word(Rng& rng) {
  static const char kAlphabet[] = "abcde";
  std::string s;
  const auto n = rng.below(7);
  for (std::uint64_t i = 0; i < n; ++i) s += kAlphabet[rng.below(5)];
  return s;
}

}  // namespace

TEST_CASE("edit distance examples") {
  CHECK(normalized_edit_distance("cat", "cat") == 0.0);
  CHECK(normalized_edit_distance("", "ab") == 1.0);
  CHECK(normalized_edit_distance("", "") == 0.0);
  CHECK(normalized_edit_distance("cat", "cart") == 0.25);
}

TEST_CASE("edit distance matches the full-matrix oracle, is symmetric, zero iff equal") {
  Rng rng(5);
  for (int i = 0; i < 500; ++i) {
    const std::string a = random_word(rng), b = random_word(rng);
    const double d = normalized_edit_distance(a, b);
    const std::size_t longest = std::max(a.size(), b.size());
    const double want =
        longest == 0 ? 0.0 : static_cast<double>(oracle::levenshtein(a, b)) / longest;
    CHECK(d == want);
    CHECK(d == normalized_edit_distance(b, a));
    CHECK((d == 0.0) == (a == b));
  }
}

TEST_CASE("edit distance counts UTF-8 code points") {
  // "café" vs "cafe": one substitution over four code points.
  CHECK(normalized_edit_distance("caf\xC3\xA9", "cafe") == 0.25);
}

TEST_CASE("cosine distance") {
  CHECK(cosine_distance({0.3, -2.0, 5.0}, {0.3, -2.0, 5.0}) == 0.0);
  CHECK(cosine_distance({1.0, 0.0}, {0.0, 1.0}) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(cosine_distance({1.0, 0.0}, {1.0, 1.0}) ==
        doctest::Approx(1.0 - 1.0 / std::sqrt(2.0)).epsilon(1e-14));
  CHECK(cosine_distance({1.0, 0.0}, {-1.0, 0.0}) == doctest::Approx(2.0));
  CHECK_THROWS_AS(cosine_distance({0.0, 0.0}, {1.0, 0.0}), DomainError);
  CHECK_THROWS_AS(cosine_distance({1.0}, {1.0, 0.0}), DomainError);
}

TEST_CASE("embedding table validation") {
  CHECK_THROWS_AS(EmbeddingTable({{"a", {1.0, 0.0}}, {"b", {1.0}}}), DomainError);
  CHECK_THROWS_AS(EmbeddingTable({{"a", {0.0, 0.0}}}), DomainError);
  const auto t = parse_embeddings_jsonl("{\"id\":\"a\",\"vec\":[1,0]}\n{\"id\":\"b\",\"vec\":[1,1]}\n");
  CHECK(t.dimension() == 2);
  CHECK_THROWS_AS(t.at("zzz"), LookupError);
}

TEST_CASE("example invariants") {
  CHECK_THROWS_AS(validate_example({"x", "a", "a", 1.0, 1.0, 0.0}), DomainError);
  CHECK_THROWS_AS(validate_example({"x", "a", "b", 1.5, 1.0, 0.0}), DomainError);
  CHECK_THROWS_AS(validate_example({"x", "a", "b", 0.5, 0.0, 0.0}), DomainError);
  CHECK_THROWS_AS(validate_example({"x", "a", "b", 0.5, 1.0, -0.1}), DomainError);
  CHECK_NOTHROW(validate_example({"x", "a", "b", 0.0, 1.0, 0.0}));
}

TEST_CASE("duplicates merge with mass addition and a warning") {
  std::vector<std::string> warnings;
  const auto ds = parse_jsonl(
      "{\"x\":\"q\",\"y\":\"a\",\"y_prime\":\"b\",\"eta\":1,\"mass\":0.3,\"delta\":0.1}\n"
      "{\"x\":\"q\",\"y\":\"a\",\"y_prime\":\"b\",\"eta\":0,\"mass\":0.2,\"delta\":0.4}\n",
      &warnings);
  REQUIRE(ds.size() == 1);
  CHECK(ds.examples()[0].mass == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(ds.examples()[0].eta == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(ds.examples()[0].delta == 0.1);
  CHECK(warnings.size() == 1);
  CHECK_FALSE(ds.normalized());
  CHECK(ds.normalized_copy().normalized());
  CHECK(ds.normalized_copy().examples()[0].mass == 1.0);
}

TEST_CASE("parse errors carry line numbers, schema errors name the field") {
  try {
    parse_jsonl("{\"x\":\"q\",\"y\":\"a\",\"y_prime\":\"b\",\"eta\":1,\"mass\":1}\n{oops\n");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  try {
    parse_jsonl("{\"x\":\"q\",\"y\":\"a\",\"y_prime\":\"b\",\"mass\":1,\"delta\":0}\n");
    FAIL("expected a schema error");
  } catch (const SchemaError& e) {
    CHECK(std::string(e.what()).find("\"eta\"") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_jsonl("{\"x\":\"q\",\"y\":\"a\",\"y_prime\":\"b\",\"eta\":1,\"mass\":1,\"w\":1}\n"),
                  SchemaError);
  CHECK_THROWS_AS(parse_jsonl("{\"x\":\"q\",\"y\":\"a\",\"y_prime\":\"b\",\"eta\":2,\"mass\":1}\n"),
                  SchemaError);
}

TEST_CASE("file round trip is the identity") {
  const auto ds = gen_synonym_stress(5, 0.1, 3);
  const auto path = temp_file("round.jsonl");
  save_jsonl(ds, path);
  CHECK(load_jsonl(path) == ds);
  const auto bt = gen_bradley_terry(3, 4, 2.0, 7).dataset;
  save_jsonl(bt, path);
  CHECK(load_jsonl(path) == bt);
  CHECK_THROWS_AS(load_jsonl(temp_file("does_not_exist.jsonl")), IoError);
}

TEST_CASE("serialized layout") {
  const auto ds = PreferenceDataset::from_examples({{"x", "a", "b", 0.25, 1.0, 0.5}}, true);
  CHECK(serialize_jsonl(ds) ==
        "{\"x\":\"x\",\"y\":\"a\",\"y_prime\":\"b\",\"eta\":0.25,\"mass\":1.0,\"delta\":0.5}\n");
}

TEST_CASE("Bradley-Terry generator") {
  const auto one = gen_bradley_terry(1, 2, 0.0, 9);
  REQUIRE(one.dataset.size() == 1);
  CHECK(one.dataset.examples()[0].eta == 0.5);
  CHECK(one.dataset.examples()[0].delta == 0.0);

  const auto a = gen_bradley_terry(3, 4, 2.0, 7);
  const auto b = gen_bradley_terry(3, 4, 2.0, 7);
  CHECK(serialize_jsonl(a.dataset) == serialize_jsonl(b.dataset));
  CHECK(a.rewards == b.rewards);
  CHECK(a.dataset.size() == 18);
  CHECK(a.dataset.normalized());
  for (const auto& e : a.dataset.examples()) {
    CHECK(e.eta > sigmoid(-4.0));
    CHECK(e.eta < sigmoid(4.0));
    const double r = a.rewards.at({e.x, e.y});
    const double rp = a.rewards.at({e.x, e.y_prime});
    CHECK(e.eta == sigmoid(r - rp));
    CHECK(1.0 - e.eta == doctest::Approx(sigmoid(rp - r)).epsilon(1e-15));
    CHECK(e.delta == doctest::Approx(std::abs(r - rp) / 4.0).epsilon(1e-15));
    CHECK(e.delta <= 1.0);
  }
  CHECK_THROWS_AS(gen_bradley_terry(0, 4, 1.0, 1), DomainError);
  CHECK_THROWS_AS(gen_bradley_terry(1, 1, 1.0, 1), DomainError);
  CHECK(gen_bradley_terry(3, 4, 2.0, 8).rewards != a.rewards);
}

TEST_CASE("generalized Bradley-Terry probabilities") {
  const auto log1 = SurrogateLoss::logistic(1.0);
  for (double d : {-3.0, -0.4, 0.0, 1.7}) {
    CHECK(generalized_bt_probability(log1, d) == doctest::Approx(sigmoid(d)).epsilon(1e-14));
  }
  for (const auto& loss : {SurrogateLoss::poly_hinge(2), SurrogateLoss::exponential(1.0),
                           SurrogateLoss::gce(0.5)}) {
    CHECK(generalized_bt_probability(loss, 0.0) == 0.5);
  }
  const double want = std::exp(-0.5) / (std::exp(-0.5) + std::exp(-1.5));
  CHECK(generalized_bt_probability(SurrogateLoss::poly_hinge(1), 0.5) ==
        doctest::Approx(want).epsilon(1e-15));
  CHECK(want == doctest::Approx(0.7311).epsilon(1e-4));
  CHECK_THROWS_AS(generalized_bt_probability(SurrogateLoss::squared_ipo(1.0), 100.0), DegenerateError);

  const auto g = gen_generalized_bt(log1, 3, 4, 2.0, 7);
  const auto b = gen_bradley_terry(3, 4, 2.0, 7);
  REQUIRE(g.dataset.size() == b.dataset.size());
  for (std::size_t i = 0; i < g.dataset.size(); ++i) {
    CHECK(std::abs(g.dataset.examples()[i].eta - b.dataset.examples()[i].eta) <= 1e-12);
  }
  const auto g2 = gen_generalized_bt(SurrogateLoss::logistic(2.0), 2, 3, 1.0, 4);
  const auto b2 = gen_bradley_terry(2, 3, 1.0, 4);
  for (std::size_t i = 0; i < g2.dataset.size(); ++i) {
    const auto& e = b2.dataset.examples()[i];
    const double d = b2.rewards.at({e.x, e.y}) - b2.rewards.at({e.x, e.y_prime});
    CHECK(g2.dataset.examples()[i].eta == doctest::Approx(sigmoid(2.0 * d)).epsilon(1e-13));
  }
}

TEST_CASE("synonym stress generator") {
  const auto ds = gen_synonym_stress(100, 0.1, 1);
  CHECK(ds.size() == 100);
  std::set<std::string> ids;
  for (const auto& e : ds.examples()) {
    CHECK(e.eta == 1.0);
    CHECK(e.delta >= 0.0);
    CHECK(e.delta < 0.1);
    CHECK(e.y != e.y_prime);
    ids.insert(e.y);
    ids.insert(e.y_prime);
  }
  CHECK(ids.size() == 200);
  CHECK(std::abs(ds.total_mass() - 1.0) <= 1e-9);
  const auto single = gen_synonym_stress(1, 0.0, 42);
  CHECK(single.size() == 1);
  CHECK(single.examples()[0].delta == 0.0);
  CHECK(serialize_jsonl(gen_synonym_stress(100, 0.1, 1)) == serialize_jsonl(ds));
  CHECK_THROWS_AS(gen_synonym_stress(0, 0.1, 1), DomainError);
}

TEST_CASE("negative construction") {
  const auto nc = gen_negative_construction({0.1, 0.01, 0.001});
  REQUIRE(nc.dataset.size() == 1);
  CHECK(nc.dataset.examples()[0].eta == 0.0);
  CHECK(nc.dataset.examples()[0].mass == 1.0);
  CHECK(nc.epsilons.size() == 3);
  CHECK_THROWS_AS(gen_negative_construction({}), DomainError);
  CHECK_THROWS_AS(gen_negative_construction({0.5, 0.5}), DomainError);
  CHECK_THROWS_AS(gen_negative_construction({0.5, -0.1}), DomainError);
}

TEST_CASE("attach distances") {
  const auto base = PreferenceDataset::from_examples(
      {{"x", "cat", "cart", 1.0, 0.5, 0.0}, {"x", "dog", "dog!", 0.0, 0.5, 0.0}}, true);
  const auto c = attach_distances(base, ConstantDistanceSource{0.7});
  for (const auto& e : c.examples()) CHECK(e.delta == 0.7);
  const auto ed = attach_distances(base, EditDistanceSource{});
  CHECK(ed.examples()[0].delta == 0.25);
  CHECK(ed.examples()[1].delta == 0.25);
  EmbeddingTable same({{"cat", {1.0, 2.0}}, {"cart", {1.0, 2.0}}, {"dog", {0.0, 1.0}},
                       {"dog!", {0.0, 1.0}}});
  for (const auto& e : attach_distances(base, EmbeddingDistanceSource{same}).examples()) {
    CHECK(e.delta == 0.0);
  }
  EmbeddingTable missing({{"cat", {1.0, 2.0}}, {"cart", {1.0, 2.0}}});
  try {
    attach_distances(base, EmbeddingDistanceSource{missing});
    FAIL("expected a lookup error");
  } catch (const LookupError& e) {
    CHECK(std::string(e.what()).find("dog") != std::string::npos);
  }
}

TEST_CASE("latent reward files round trip") {
  const auto bt = gen_bradley_terry(2, 3, 1.0, 2);
  const auto path = temp_file("latents.jsonl");
  save_latents_jsonl(bt.rewards, path);
  const auto back = load_latents_jsonl(path);
  CHECK(back == bt.rewards);
}

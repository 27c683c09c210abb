#include <cmath>
#include <memory>

#include "doctest.h"
#include "sarank/error.hpp"
#include "sarank/numeric.hpp"
#include "sarank/scoring_model.hpp"

using namespace sarank;

namespace {

PreferenceExample pair(const std::string& x, const std::string& y, const std::string& yp,
                       double delta = 0.0) {
  return {x, y, yp, 1.0, 1.0, delta};
}

double objective(const ScoringModel& m, const PreferenceExample& e, const SurrogateLoss& loss,
                 const MarginSpec& spec, int w) {
  return eval_shifted(loss, spec, w * m.signed_margin(e), e.delta);
}

SurrogateLoss random_loss(Rng& rng) {
  switch (rng.below(6)) {
    case 0: return SurrogateLoss::logistic(0.5 + 2.0 * rng.uniform());
    case 1: return SurrogateLoss::exponential(0.3 + rng.uniform());
    case 2: return SurrogateLoss::poly_hinge(1 + static_cast<int>(rng.below(3)));
    case 3: return SurrogateLoss::squared_ipo(0.5 + rng.uniform());
    case 4: return SurrogateLoss::gce(0.1 + 0.8 * rng.uniform());
    default: return SurrogateLoss::mae();
  }
}

MarginSpec random_spec(Rng& rng) {
  switch (rng.below(4)) {
    case 0: return MarginSpec::none();
    case 1: return MarginSpec::uniform(2.0 * rng.uniform());
    case 2: return MarginSpec::structure_aware(3.0 * rng.uniform(), false);
    default: return MarginSpec::structure_aware(0.2 + 2.0 * rng.uniform(), true);
  }
}

}  // namespace

TEST_CASE("score pipeline") {
  const std::vector<ScoreKey> keys{{"x", "a"}, {"x", "b"}};
  auto m = ScoringModel::tabular(keys);
  CHECK(m.score("x", "a") == 0.0);
  m.set_raw("x", "a", 3.0);
  m.set_capacity(2.0);
  CHECK(m.score("x", "a") == 1.0);
  m.set_capacity(std::nullopt);
  m.set_raw("x", "a", 0.74);
  m.set_quantize_gamma(0.5);
  CHECK(m.score("x", "a") == 0.5);
  m.set_raw("x", "a", 0.25);
  CHECK(m.score("x", "a") == 0.5);
  m.set_raw("x", "a", -0.25);
  CHECK(m.score("x", "a") == 0.0);
  CHECK_THROWS_AS(m.score("x", "zzz"), LookupError);
  CHECK_THROWS_AS(m.set_capacity(0.0), DomainError);
  CHECK_THROWS_AS(m.set_quantize_gamma(-1.0), DomainError);
}

TEST_CASE("signed margins") {
  auto m = ScoringModel::tabular(std::vector<ScoreKey>{{"x", "a"}, {"x", "b"}});
  CHECK(m.signed_margin(pair("x", "a", "b")) == 0.0);
  m.set_raw("x", "a", 2.0);
  m.set_raw("x", "b", 0.5);
  CHECK(m.signed_margin(pair("x", "a", "b")) == 1.5);
  CHECK(m.signed_margin(pair("x", "b", "a")) == -1.5);

  auto g = ScoringModel::global(std::vector<std::string>{"a", "b"});
  g.set_raw("anything", "a", 0.7);
  g.set_raw("", "b", -0.2);
  CHECK(g.signed_margin(pair("c1", "a", "b")) == g.signed_margin(pair("c2", "a", "b")));
  CHECK(g.score("c1", "a") == 0.7);
}

TEST_CASE("scaling") {
  auto m = ScoringModel::tabular(std::vector<ScoreKey>{{"x", "a"}, {"x", "b"}});
  m.set_raw("x", "a", 0.3);
  m.set_raw("x", "b", -0.6);
  const auto e = pair("x", "a", "b");
  CHECK(m.scale(1.0).signed_margin(e) == m.signed_margin(e));
  CHECK(m.scale(10.0).signed_margin(e) == doctest::Approx(10.0 * m.signed_margin(e)).epsilon(1e-15));
  CHECK(m.scale(10.0).params() == m.params());
  m.set_capacity(1.0);
  CHECK(std::abs(m.scale(10.0).signed_margin(e)) <= 1.0);
  CHECK_THROWS_AS(m.scale(0.0), DomainError);
  CHECK_THROWS_AS(m.scale(-2.0), DomainError);
}

TEST_CASE("documented gradients") {
  auto m = ScoringModel::tabular(std::vector<ScoreKey>{{"x", "a"}, {"x", "b"}, {"x", "c"}});
  const auto e = pair("x", "a", "b");
  const auto log1 = SurrogateLoss::logistic(1.0);
  for (int w : {1, -1}) {
    const auto g = m.grad_params(e, log1, MarginSpec::none(), w);
    CHECK(g[m.param_index("x", "a")] == doctest::Approx(-0.5 * w).epsilon(1e-15));
    CHECK(g[m.param_index("x", "b")] == doctest::Approx(0.5 * w).epsilon(1e-15));
    CHECK(g[m.param_index("x", "c")] == 0.0);
  }
  m.set_raw("x", "a", 2.0);
  for (double v : m.grad_params(e, SurrogateLoss::poly_hinge(2), MarginSpec::uniform(0.5), 1)) {
    CHECK(v == 0.0);
  }
  m.set_capacity(1.0);
  m.set_raw("x", "a", 3.0);
  m.set_raw("x", "b", -3.0);
  for (double v : m.grad_params(e, log1, MarginSpec::none(), -1)) CHECK(v == 0.0);
  m.set_quantize_gamma(0.5);
  CHECK_THROWS_AS(m.grad_params(e, log1, MarginSpec::none(), 1), NotTrainableError);
}

TEST_CASE("gradients agree with central differences") {
  Rng rng(2024);
  const double h = 1e-5;
  int checked = 0;
  for (int trial = 0; checked < 100; ++trial) {
    REQUIRE(trial < 1000);
    const auto loss = random_loss(rng);
    const auto spec = random_spec(rng);
    const int w = rng.below(2) == 0 ? 1 : -1;
    const double delta = rng.uniform();
    const auto e = pair("x", "a", "b", delta);
    const auto kind = rng.below(3);
    ScoringModel m = ScoringModel::tabular(std::vector<ScoreKey>{});
    if (kind == 0) {
      m = ScoringModel::tabular(std::vector<ScoreKey>{{"x", "a"}, {"x", "b"}, {"x", "c"}});
    } else if (kind == 1) {
      m = ScoringModel::global(std::vector<std::string>{"a", "b", "c"});
    } else {
      std::map<ScoreKey, std::vector<double>> f;
      for (const char* y : {"a", "b"}) {
        f[{"x", y}] = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
      }
      m = ScoringModel::linear(std::make_shared<FeatureMap>(f), rng.next());
    }
    for (auto& p : m.params()) p = rng.uniform(-1.5, 1.5);
    if (rng.below(3) == 0) m.set_capacity(0.5 + 3.0 * rng.uniform());
    m = m.scale(0.5 + rng.uniform());

    // Skip points within 1e-3 of a clamp or hinge boundary.
    bool near_boundary = false;
    if (m.capacity()) {
      for (const char* y : {"a", "b"}) {
        const double s = m.scale_alpha() * m.raw_score("x", y);
        if (std::abs(std::abs(s) - *m.capacity() / 2.0) < 1e-3) near_boundary = true;
      }
    }
    const double u = w * m.signed_margin(e);
    if (loss.family == LossFamily::poly_hinge &&
        std::abs(u - spec.effective_margin(delta) - 1.0) < 1e-3) {
      near_boundary = true;
    }
    if (near_boundary) continue;
    ++checked;

    const auto g = m.grad_params(e, loss, spec, w);
    double max_err = 0.0, max_abs = 0.0;
    for (std::size_t i = 0; i < m.num_params(); ++i) {
      auto up = m, dn = m;
      up.params()[i] += h;
      dn.params()[i] -= h;
      const double fd = (objective(up, e, loss, spec, w) - objective(dn, e, loss, spec, w)) / (2 * h);
      max_err = std::max(max_err, std::abs(fd - g[i]));
      max_abs = std::max(max_abs, std::abs(fd));
    }
    CHECK(max_err <= 1e-4 * std::max(1.0, max_abs));
  }
}

TEST_CASE("quantized models realize the hard margin") {
  Rng rng(11);
  for (int t = 0; t < 50; ++t) {
    const double gamma = 0.1 + rng.uniform();
    std::vector<ScoreKey> keys;
    for (int i = 0; i < 6; ++i) keys.push_back({"x", "r" + std::to_string(i)});
    auto m = ScoringModel::tabular(keys);
    for (auto& p : m.params()) p = rng.uniform(-5, 5);
    m.set_quantize_gamma(gamma);
    for (const auto& a : keys) {
      for (const auto& b : keys) {
        const double d = m.score("x", a.y) - m.score("x", b.y);
        if (d != 0.0) {
          CHECK(std::abs(d) >= gamma * (1 - 1e-12));
          const double k = d / gamma;
          CHECK(std::abs(k - std::round(k)) <= 1e-9);
        }
      }
    }
  }
}

TEST_CASE("scaling keeps every ranking and capacity bounds margins") {
  Rng rng(3);
  std::vector<ScoreKey> keys;
  for (int i = 0; i < 8; ++i) keys.push_back({"x", "r" + std::to_string(i)});
  for (int t = 0; t < 50; ++t) {
    auto m = ScoringModel::tabular(keys);
    for (auto& p : m.params()) p = rng.uniform(-4, 4);
    const double alpha = std::exp(rng.uniform(-5, 5));
    auto c = m;
    c.set_capacity(0.1 + 2.0 * rng.uniform());
    for (std::size_t i = 0; i + 1 < keys.size(); ++i) {
      const auto e = pair("x", keys[i].y, keys[i + 1].y);
      const double s0 = m.signed_margin(e);
      const double s1 = m.scale(alpha).signed_margin(e);
      CHECK((s0 > 0) == (s1 > 0));
      CHECK((s0 < 0) == (s1 < 0));
      CHECK(std::abs(c.scale(alpha).signed_margin(e)) <= *c.capacity() + 1e-12);
    }
  }
}

TEST_CASE("projection keeps parameters inside the capacity band") {
  auto m = ScoringModel::tabular(std::vector<ScoreKey>{{"x", "a"}, {"x", "b"}});
  m.set_capacity(1.0);
  m = m.scale(2.0);
  m.set_raw("x", "a", 3.0);
  m.set_raw("x", "b", -0.1);
  m.project();
  CHECK(m.raw_score("x", "a") == 0.25);
  CHECK(m.raw_score("x", "b") == -0.1);
}

TEST_CASE("JSON round trip") {
  auto t = ScoringModel::tabular(std::vector<ScoreKey>{{"x", "a"}, {"y", "b"}});
  t.set_raw("x", "a", 0.125);
  t.set_capacity(3.0);
  auto back = ScoringModel::from_json(t.to_json());
  CHECK(back.params() == t.params());
  CHECK(back.capacity() == t.capacity());
  CHECK(back.score("x", "a") == t.score("x", "a"));
  CHECK(t.to_json()["params"]["x"]["a"] == 0.125);

  auto g = ScoringModel::global(std::vector<std::string>{"a", "b"}).scale(3.0);
  g.set_quantize_gamma(0.5);
  g.set_raw("", "b", 1.0);
  const auto gb = ScoringModel::from_json(g.to_json());
  CHECK(gb.kind() == ModelKind::global);
  CHECK(gb.scale_alpha() == 3.0);
  CHECK(gb.quantize_gamma() == g.quantize_gamma());
  CHECK(gb.score("q", "b") == 3.0);

  auto f = std::make_shared<FeatureMap>(parse_features_jsonl(
      "{\"x\":\"x\",\"y\":\"a\",\"phi\":[1,0]}\n{\"x\":\"x\",\"y\":\"b\",\"phi\":[0,1]}\n"));
  auto l = ScoringModel::linear(f, 5);
  for (double p : l.params()) CHECK(std::abs(p) <= 0.01);
  CHECK(l.params() == ScoringModel::linear(f, 5).params());
  const auto lb = ScoringModel::from_json(l.to_json(), f);
  CHECK(lb.params() == l.params());
  CHECK(lb.score("x", "b") == l.score("x", "b"));
  CHECK_THROWS_AS(l.score("x", "c"), LookupError);
  CHECK_THROWS_AS(parse_features_jsonl("{\"x\":\"x\",\"y\":\"a\",\"phi\":[1,0]}\n{\"x\":\"x\",\"y\":\"b\",\"phi\":[1]}\n"),
                  DomainError);
}

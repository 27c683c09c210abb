#include <cmath>
#include <vector>

#include "doctest.h"
#include "oracles/oracle.hpp"
#include "sarank/error.hpp"
#include "sarank/numeric.hpp"
#include "sarank/surrogate_loss.hpp"

using namespace sarank;

namespace {

oracle::Loss to_oracle(const SurrogateLoss& l) {
  oracle::Loss o;
  o.family = static_cast<oracle::Family>(static_cast<int>(l.family));
  o.beta = l.beta;
  o.degree = l.degree;
  o.q = l.q;
  return o;
}

std::vector<SurrogateLoss> all_losses() {
  return {SurrogateLoss::logistic(1.0), SurrogateLoss::logistic(2.5),
          SurrogateLoss::exponential(1.0), SurrogateLoss::exponential(0.3),
          SurrogateLoss::poly_hinge(1), SurrogateLoss::poly_hinge(2),
          SurrogateLoss::poly_hinge(3), SurrogateLoss::squared_ipo(1.0),
          SurrogateLoss::gce(0.5), SurrogateLoss::gce(1.0), SurrogateLoss::mae()};
}

double rel_err(double got, double want) {
  return std::abs(got - want) / std::max(1e-300, std::abs(want));
}

}  // namespace

TEST_CASE("loss values match the high-precision oracle") {
  for (const auto& loss : all_losses()) {
    CAPTURE(loss.label());
    for (double u = -30.0; u <= 30.0; u += 0.37) {
      const double want = static_cast<double>(oracle::phi(to_oracle(loss), oracle::mp(u)));
      const double got = eval_loss(loss, u);
      if (want == 0.0) {
        CHECK(got == 0.0);
      } else {
        CHECK(rel_err(got, want) <= 1e-12);
      }
    }
  }
}

TEST_CASE("loss derivatives match the oracle and central differences") {
  Rng rng(11);
  for (const auto& loss : all_losses()) {
    CAPTURE(loss.label());
    for (int i = 0; i < 200; ++i) {
      const double u = rng.uniform(-10.0, 10.0);
      if (loss.family == LossFamily::poly_hinge && std::abs(u - 1.0) < 1e-3) continue;
      const double g = eval_grad(loss, u);
      const double want = static_cast<double>(oracle::dphi(to_oracle(loss), oracle::mp(u)));
      CHECK(std::abs(g - want) <= 1e-12 * (1.0 + std::abs(want)));
      const double h = 1e-5;
      const double fd = (eval_loss(loss, u + h) - eval_loss(loss, u - h)) / (2 * h);
      CHECK(std::abs(g - fd) <= 1e-4 * (1.0 + std::abs(g)));
    }
  }
}

TEST_CASE("documented loss and derivative values") {
  CHECK(eval_loss(SurrogateLoss::logistic(1.0), 0.0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(eval_loss(SurrogateLoss::poly_hinge(3), -1.0) == 8.0);
  CHECK(eval_loss(SurrogateLoss::poly_hinge(2), 1.5) == 0.0);
  CHECK(eval_loss(SurrogateLoss::gce(0.5), 0.0) == doctest::Approx(0.585786437626905).epsilon(1e-13));
  CHECK(eval_grad(SurrogateLoss::logistic(1.0), 0.0) == -0.5);
  CHECK(eval_grad(SurrogateLoss::poly_hinge(1), 2.0) == 0.0);
  CHECK(eval_grad(SurrogateLoss::poly_hinge(2), 1.0) == 0.0);
  CHECK(eval_grad(SurrogateLoss::exponential(1.0), 0.0) == -1.0);
}

TEST_CASE("non-finite arguments are rejected") {
  CHECK_THROWS_AS(eval_loss(SurrogateLoss::logistic(), std::nan("")), DomainError);
  CHECK_THROWS_AS(eval_grad(SurrogateLoss::mae(), INFINITY), DomainError);
}

TEST_CASE("logistic tails stay finite and accurate") {
  const auto loss = SurrogateLoss::logistic(1.0);
  CHECK(eval_loss(loss, -800.0) == doctest::Approx(800.0).epsilon(1e-15));
  CHECK(eval_loss(loss, 800.0) == 0.0);
  CHECK(rel_err(eval_loss(loss, 40.0), std::exp(-40.0)) < 1e-15);
  CHECK(eval_grad(loss, -800.0) == -1.0);
}

TEST_CASE("shape invariants on a 1001-point grid over [-50, 50]") {
  for (const auto& loss : all_losses()) {
    CAPTURE(loss.label());
    std::vector<double> v;
    for (int i = 0; i <= 1000; ++i) v.push_back(eval_loss(loss, -50.0 + 0.1 * i));
    bool nonneg = true, nonincreasing = true, convex = true;
    for (std::size_t i = 0; i < v.size(); ++i) {
      nonneg = nonneg && v[i] >= 0.0;
      if (i > 0) nonincreasing = nonincreasing && v[i] <= v[i - 1] * (1 + 1e-15);
      if (i > 0 && i + 1 < v.size()) {
        convex = convex && v[i] <= 0.5 * (v[i - 1] + v[i + 1]) + 1e-9 * (1 + std::abs(v[i]));
      }
    }
    CHECK(nonneg);
    CHECK(nonincreasing == loss.is_monotone());
    // The bounded families saturate, so they bend the other way for u < 0.
    CHECK(convex == !loss.is_bounded());
  }
}

TEST_CASE("margin shifts") {
  const auto log1 = SurrogateLoss::logistic(1.0);
  CHECK(eval_shifted(log1, MarginSpec::uniform(1.0), 1.0, 0.0) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-15));
  const auto hinge = SurrogateLoss::poly_hinge(1);
  CHECK(eval_shifted(hinge, MarginSpec::structure_aware(5.0, false), 0.0, 0.2) ==
        doctest::Approx(2.0).epsilon(1e-15));
  CHECK(eval_shifted(hinge, MarginSpec::structure_aware(5.0, true), 0.0, 0.2) ==
        doctest::Approx(1.0).epsilon(1e-15));
  CHECK(eval_shifted(log1, MarginSpec::none(), 0.3, 0.9) == eval_loss(log1, 0.3));
  // delta only matters for structure-aware margins.
  CHECK(eval_shifted(log1, MarginSpec::uniform(0.5), 0.3, 0.9) == eval_loss(log1, -0.2));
}

TEST_CASE("inverse weighting is structure-aware only and needs Phi(-Gamma) > 0") {
  MarginSpec bad = MarginSpec::uniform(1.0);
  bad.inverse_weighting = true;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_THROWS_AS(MarginSpec::structure_aware(0.0).validate(), ConfigError);
  CHECK_THROWS_AS(MarginSpec::uniform(-1.0).validate(), ConfigError);
}

TEST_CASE("exponential shift is multiplicative") {
  const auto e = SurrogateLoss::exponential(1.0);
  for (double g : {0.1, 0.7, 2.0, 5.0}) {
    for (double u = -5.0; u <= 5.0; u += 0.25) {
      CHECK(rel_err(eval_shifted(e, MarginSpec::uniform(g), u, 0.0), std::exp(g) * eval_loss(e, u)) <= 1e-12);
    }
  }
}

TEST_CASE("structure-aware dominance for u <= 0") {
  for (const auto& loss : all_losses()) {
    if (!loss.is_monotone()) continue;
    for (double G : {0.05, 0.5, 1.0, 3.0}) {
      const double norm = eval_loss(loss, -G);
      for (double u = -20.0; u <= 0.0; u += 0.1) {
        CHECK(eval_loss(loss, u - G) / norm >= 1.0 - 1e-12);
      }
    }
  }
}

TEST_CASE("consistency coefficients") {
  CHECK(consistency_coefficient_hard(SurrogateLoss::logistic(2.0), 0.5) ==
        doctest::Approx(1.0).epsilon(1e-12));
  CHECK(consistency_coefficient_hard(SurrogateLoss::poly_hinge(1), 1.0) == 0.5);
  CHECK_THROWS_AS(consistency_coefficient_hard(SurrogateLoss::logistic(1.0), 0.0), DegenerateError);
  CHECK_THROWS_AS(consistency_coefficient_hard(SurrogateLoss::squared_ipo(1.0), 1.0), DomainError);

  const double want = static_cast<double>(
      1 / oracle::phi(to_oracle(SurrogateLoss::logistic(1.0)), oracle::mp(-1)));
  CHECK(consistency_coefficient_shifted(SurrogateLoss::logistic(1.0), 1.0) ==
        doctest::Approx(want).epsilon(1e-14));
  CHECK(want == doctest::Approx(0.7614628596146).epsilon(1e-12));
  CHECK(consistency_coefficient_shifted(SurrogateLoss::poly_hinge(2), 1.0) == 0.25);
  CHECK(consistency_coefficient_shifted(SurrogateLoss::exponential(1.0), 0.0) == 1.0);
}

TEST_CASE("logistic coefficient identity over random beta and gamma") {
  Rng rng(2024);
  for (int i = 0; i < 50; ++i) {
    const double beta = rng.uniform(0.1, 5.0);
    const double gamma = rng.uniform(0.01, 10.0);
    const auto l = SurrogateLoss::logistic(beta);
    const double gap = eval_loss(l, -gamma) - eval_loss(l, gamma);
    CHECK(std::abs(gap - beta * gamma) <= 1e-9 * (1 + beta * gamma));
  }
}

TEST_CASE("margin-capacity profile") {
  CHECK(margin_capacity_profile(SurrogateLoss::poly_hinge(3), 3.0, 1.0) ==
        doctest::Approx(27.0 / 64.0).epsilon(1e-15));
  for (const auto& loss : all_losses()) {
    if (!loss.is_monotone()) continue;
    CHECK(margin_capacity_profile(loss, 2.0, 0.0) == 1.0);
  }
  CHECK(std::abs(margin_capacity_profile(SurrogateLoss::gce(0.7), 30.0, 1.0) - 1.0) < 1e-3);
  const auto lg = to_oracle(SurrogateLoss::logistic(1.0));
  const double want =
      static_cast<double>(oracle::phi(lg, oracle::mp(-2)) / oracle::phi(lg, oracle::mp(-3)));
  CHECK(margin_capacity_profile(SurrogateLoss::logistic(1.0), 3.0, 1.0) ==
        doctest::Approx(want).epsilon(1e-14));
  CHECK(want == doctest::Approx(0.69768).epsilon(1e-5));
  CHECK_THROWS_AS(margin_capacity_profile(SurrogateLoss::logistic(1.0), 1.0, -0.5), DomainError);
}

TEST_CASE("profile closed form and orderings") {
  for (double gamma = 1.25; gamma <= 10.0; gamma += 0.45) {
    const double K = 1.0;
    for (int k = 1; k <= 6; ++k) {
      const double rho = margin_capacity_profile(SurrogateLoss::poly_hinge(k), gamma, K);
      CHECK(std::abs(rho - std::pow(1.0 - K / (1.0 + gamma), k)) <= 1e-12);
      if (k > 1) {
        CHECK(rho < margin_capacity_profile(SurrogateLoss::poly_hinge(k - 1), gamma, K));
      }
    }
    const double r3 = margin_capacity_profile(SurrogateLoss::poly_hinge(3), gamma, K);
    const double r2 = margin_capacity_profile(SurrogateLoss::poly_hinge(2), gamma, K);
    const double rl = margin_capacity_profile(SurrogateLoss::logistic(1.0), gamma, K);
    CHECK(r3 < r2);
    CHECK(r2 < rl);
  }
  for (const auto& loss : {SurrogateLoss::gce(0.7), SurrogateLoss::mae()}) {
    double prev = 0.0;
    for (double gamma : {5.0, 10.0, 20.0, 40.0}) {
      const double rho = margin_capacity_profile(loss, gamma, 1.0);
      CHECK(rho >= prev);
      CHECK(rho <= 1.0);
      prev = rho;
    }
    CHECK(prev > 0.999);
  }
}

TEST_CASE("optimal logistic margin") {
  CHECK(optimal_margin_logistic(1.0, 5.0, 0.1) == doctest::Approx(5.0 + std::log(0.02)).epsilon(1e-15));
  CHECK(optimal_margin_logistic(1.0, 5.0, 0.1) == doctest::Approx(1.0880).epsilon(1e-4));
  CHECK(optimal_margin_logistic(1.0, 1.0, 1.0) == 1.0);
  CHECK(optimal_margin_logistic(2.0, 1.0, 0.01) == doctest::Approx(-1.649).epsilon(1e-3));
  CHECK_THROWS_AS(optimal_margin_logistic(0.0, 1.0, 0.1), DomainError);
}

TEST_CASE("shift invariance factor") {
  const auto f = shift_invariance_factor(SurrogateLoss::exponential(1.0), std::log(2.0));
  REQUIRE(f.has_value());
  CHECK(*f == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(shift_invariance_factor(SurrogateLoss::exponential(1.0), 0.0).value() == 1.0);
  for (double g : {0.3, 1.0, 4.0}) {
    CHECK(std::abs(*shift_invariance_factor(SurrogateLoss::exponential(1.0), g) - std::exp(g)) <=
          1e-12 * std::exp(g));
  }
  CHECK_FALSE(shift_invariance_factor(SurrogateLoss::logistic(1.0), 1.0).has_value());
  CHECK_FALSE(shift_invariance_factor(SurrogateLoss::poly_hinge(2), 1.0).has_value());
}

TEST_CASE("parameter validation") {
  CHECK_THROWS_AS(SurrogateLoss::logistic(0.0).validate(), ConfigError);
  CHECK_THROWS_AS(SurrogateLoss::poly_hinge(0).validate(), ConfigError);
  CHECK_THROWS_AS(SurrogateLoss::gce(0.0).validate(), ConfigError);
  CHECK_THROWS_AS(SurrogateLoss::gce(1.5).validate(), ConfigError);
  CHECK_NOTHROW(SurrogateLoss::gce(1.0).validate());
}

TEST_CASE("JSON round trips and strict parsing") {
  for (const auto& loss : all_losses()) {
    nlohmann::json j = loss;
    CHECK(j.get<SurrogateLoss>() == loss);
  }
  for (const auto& spec : {MarginSpec::none(), MarginSpec::uniform(0.75),
                           MarginSpec::structure_aware(2.0, true)}) {
    nlohmann::json j = spec;
    CHECK(j.get<MarginSpec>() == spec);
  }
  CHECK_THROWS_AS(nlohmann::json::parse(R"({"family":"logistic","temperature":1})").get<SurrogateLoss>(),
                  SchemaError);
  CHECK_THROWS_AS(nlohmann::json::parse(R"({"beta":1})").get<SurrogateLoss>(), SchemaError);
  CHECK_THROWS_AS(nlohmann::json::parse(R"({"family":"hinge"})").get<SurrogateLoss>(), ConfigError);
  CHECK_THROWS_AS(nlohmann::json::parse(R"({"kind":"uniform","gamma":-1})").get<MarginSpec>(),
                  ConfigError);
}

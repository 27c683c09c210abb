#include "sarank/generators.hpp"

#include <cmath>
#include <string>

#include "sarank/error.hpp"
#include "sarank/numeric.hpp"

namespace sarank {

namespace {

void check_layout(int contexts, int responses_per_context, double reward_scale) {
  if (contexts < 1) throw DomainError("generator: contexts must be >= 1");
  if (responses_per_context < 2) {
    throw DomainError("generator: responses_per_context must be >= 2");
  }
  if (!(reward_scale >= 0.0) || !std::isfinite(reward_scale)) {
    throw DomainError("generator: reward_scale must be finite and >= 0");
  }
}

template <typename EtaFn>
LatentDataset build_bt(int contexts, int responses_per_context, double reward_scale,
                       std::uint64_t seed, EtaFn&& eta_of) {
  check_layout(contexts, responses_per_context, reward_scale);
  Rng rng(seed);
  LatentDataset out;
  std::vector<PreferenceExample> examples;
  const auto n = static_cast<std::size_t>(responses_per_context);
  const double pairs_total =
      static_cast<double>(contexts) * static_cast<double>(n * (n - 1) / 2);
  for (int i = 0; i < contexts; ++i) {
    const std::string x = "x" + std::to_string(i);
    std::vector<double> r(n);
    for (std::size_t j = 0; j < n; ++j) {
      r[j] = rng.uniform(-reward_scale, reward_scale);
      out.rewards[{x, "y" + std::to_string(j)}] = r[j];
    }
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t k = j + 1; k < n; ++k) {
        PreferenceExample e;
        e.x = x;
        e.y = "y" + std::to_string(j);
        e.y_prime = "y" + std::to_string(k);
        const double diff = r[j] - r[k];
        e.eta = eta_of(diff);
        e.mass = 1.0 / pairs_total;
        e.delta = reward_scale > 0.0 ? std::abs(diff) / (2.0 * reward_scale) : 0.0;
        examples.push_back(std::move(e));
      }
    }
  }
  out.dataset = PreferenceDataset::from_examples(std::move(examples), true);
  return out;
}

}  // namespace

LatentDataset gen_bradley_terry(int contexts, int responses_per_context, double reward_scale,
                                std::uint64_t seed) {
  return build_bt(contexts, responses_per_context, reward_scale, seed,
                  [](double diff) { return sigmoid(diff); });
}

double generalized_bt_probability(const SurrogateLoss& loss, double reward_difference) {
  const double a = std::exp(-eval_loss(loss, reward_difference));
  const double b = std::exp(-eval_loss(loss, -reward_difference));
  if (!(a + b > 0.0)) {
    throw DegenerateError("generalized BT: both orientations have zero probability at d=" +
                          format_number(reward_difference));
  }
  return a / (a + b);
}

LatentDataset gen_generalized_bt(const SurrogateLoss& loss, int contexts,
                                 int responses_per_context, double reward_scale,
                                 std::uint64_t seed) {
  loss.validate();
  if (loss.family == LossFamily::logistic && loss.beta == 1.0) {
    // exp(-log(1 + e^-d)) is sigmoid(d) exactly; keep the two generators bit-identical.
    return gen_bradley_terry(contexts, responses_per_context, reward_scale, seed);
  }
  return build_bt(contexts, responses_per_context, reward_scale, seed,
                  [&](double diff) { return generalized_bt_probability(loss, diff); });
}

PreferenceDataset gen_synonym_stress(int n_pairs, double max_delta, std::uint64_t seed) {
  if (n_pairs < 1) throw DomainError("gen_synonym_stress: n_pairs must be >= 1");
  if (!(max_delta >= 0.0 && max_delta < 1.0)) {
    throw DomainError("gen_synonym_stress: max_delta must lie in [0, 1)");
  }
  Rng rng(seed);
  std::vector<PreferenceExample> examples;
  examples.reserve(static_cast<std::size_t>(n_pairs));
  for (int i = 0; i < n_pairs; ++i) {
    PreferenceExample e;
    const std::string id = std::to_string(i);
    e.x = "s" + id;
    e.y = "a" + id;
    e.y_prime = "b" + id;
    e.eta = 1.0;
    e.mass = 1.0 / n_pairs;
    e.delta = max_delta * rng.uniform();
    examples.push_back(std::move(e));
  }
  return PreferenceDataset::from_examples(std::move(examples), true);
}

NegativeConstruction gen_negative_construction(std::vector<double> epsilons) {
  if (epsilons.empty()) throw DomainError("negative construction: empty epsilon schedule");
  for (std::size_t i = 0; i < epsilons.size(); ++i) {
    if (!(epsilons[i] > 0.0) || !std::isfinite(epsilons[i])) {
      throw DomainError("negative construction: epsilons must be positive");
    }
    if (i > 0 && !(epsilons[i] < epsilons[i - 1])) {
      throw DomainError("negative construction: epsilons must be strictly decreasing");
    }
  }
  NegativeConstruction out;
  out.dataset = PreferenceDataset::from_examples({{"x0", "y0", "y1", 0.0, 1.0, 0.0}}, true);
  out.epsilons = std::move(epsilons);
  return out;
}

}  // namespace sarank

#pragma once

#include <cstdint>
#include <vector>

#include "sarank/preference_data.hpp"
#include "sarank/surrogate_loss.hpp"

namespace sarank {

// Contexts are named "x0", "x1", ...; responses "y0", "y1", ... within each
// context. Every unordered pair (y_j, y_k) with j < k is emitted once with
// y = y_j, eta = sigmoid(r_j - r_k) and uniform mass. Rewards are uniform in
// [-reward_scale, reward_scale]; delta is |r_j - r_k| / (2 reward_scale)
// (0 when reward_scale is 0).
LatentDataset gen_bradley_terry(int contexts, int responses_per_context, double reward_scale,
                                std::uint64_t seed);

// Pair-normalized preference probability under exp(-Phi):
// exp(-Phi(d)) / (exp(-Phi(d)) + exp(-Phi(-d))). Throws DegenerateError
// when both terms underflow to zero.
double generalized_bt_probability(const SurrogateLoss& loss, double reward_difference);

// Same rewards and layout as gen_bradley_terry, eta from
// generalized_bt_probability.
LatentDataset gen_generalized_bt(const SurrogateLoss& loss, int contexts,
                                 int responses_per_context, double reward_scale,
                                 std::uint64_t seed);

// n_pairs deterministic preferences (eta = 1) over distinct identifiers with
// delta uniform in [0, max_delta).
PreferenceDataset gen_synonym_stress(int n_pairs, double max_delta, std::uint64_t seed);

struct NegativeConstruction {
  PreferenceDataset dataset;
  std::vector<double> epsilons;
};

// One tuple with eta = 0 and mass 1. Throws DomainError unless the schedule
// is nonempty, positive and strictly decreasing.
NegativeConstruction gen_negative_construction(std::vector<double> epsilons);

}  // namespace sarank

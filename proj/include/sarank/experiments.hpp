#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "sarank/preference_data.hpp"
#include "sarank/risk_engine.hpp"
#include "sarank/scoring_model.hpp"
#include "sarank/surrogate_loss.hpp"
#include "sarank/trainer.hpp"

namespace sarank {

// Fixed uniform margin against a structure-aware margin on near-synonym
// pairs, both with the logistic loss and the same capacity-bounded tabular
// model.
struct SynonymConfig {
  int n_pairs = 100;
  double max_delta = 0.1;
  double gamma_fixed = 1.0;
  double tau = 5.0;
  double beta = 1.0;
  // Without a score bound both runs drive the loss to zero and the ordering
  // of their final losses is decided by the step size alone.
  std::optional<double> capacity_K = 5.3;
  std::uint64_t seed = 0;
  OptimizerConfig optimizer{10.0, 0.9, 500, 1e-12, 0};

  void validate() const;
};

struct SynonymReport {
  TrainTrace fixed;
  TrainTrace structure_aware;
  double fixed_final_loss = 0.0;
  double sa_final_loss = 0.0;
  bool sa_below_fixed = false;
};

SynonymReport run_synonym_experiment(const SynonymConfig& cfg);
nlohmann::json summary_json(const SynonymReport& report);

// Logistic, squared hinge and cubic hinge under one uniform margin on a
// capacity-clamped tabular model over Bradley-Terry data.
struct CapacityConfig {
  int contexts = 20;
  int responses_per_context = 5;
  double reward_scale = 0.5;
  std::optional<double> capacity_K = 0.5;
  double gamma = 1.0;
  std::uint64_t seed = 0;
  OptimizerConfig optimizer{0.1, 0.9, 1000, 1e-12, 0};

  void validate() const;
};

struct CapacityRun {
  SurrogateLoss loss;
  TrainTrace trace;
  double accuracy = 0.0;
  // Fraction (by mass, eta != 0.5) with signed dh >= min(gamma, K - 1e-6).
  double margin_satisfaction = 0.0;
};

struct CapacityReport {
  std::vector<CapacityRun> runs;  // logistic, poly_hinge(2), poly_hinge(3)
  bool ordered = false;           // accuracy non-decreasing along runs
};

CapacityReport run_capacity_experiment(const CapacityConfig& cfg);
nlohmann::json summary_json(const CapacityReport& report);

struct ProfileConfig {
  std::vector<double> gammas;
  double capacity_K = 1.0;
  std::vector<SurrogateLoss> losses;
  std::vector<double> epsilons{1e-1, 1e-2, 1e-3};  // for the logistic optimal margin

  // Default gamma grid 0.5, 1.0, ..., 10 plus 20 and 40; default losses
  // logistic, poly_hinge 1..3, gce(q=0.7), mae.
  static ProfileConfig defaults();
  void validate() const;
};

struct ProfileRow {
  SurrogateLoss loss;
  double gamma = 0.0;
  double capacity_K = 0.0;
  std::optional<double> rho;  // nullopt when Phi(-gamma) is zero
  std::string note;
};

struct OptimalMarginRow {
  double beta = 1.0;
  double capacity_K = 0.0;
  double epsilon = 0.0;
  double gamma_star = 0.0;
  bool capacity_dominates = false;
};

struct ProfileReport {
  std::vector<ProfileRow> rows;  // grouped by loss, gamma ascending
  std::vector<OptimalMarginRow> optimal_margins;
  std::vector<std::string> warnings;
};

ProfileReport run_profile_sweep(const ProfileConfig& cfg);

// family,param,gamma,K,rho,note
std::string profile_csv(const ProfileReport& report);
// gamma,K,<one column per loss label>
std::string profile_wide_csv(const ProfileReport& report);
// One polyline per loss over gamma.
std::string profile_svg(const ProfileReport& report);
nlohmann::json summary_json(const ProfileReport& report);

// Pairwise accuracy on delta-quantile splits: "ambiguous" is the lowest
// ambiguous_fraction of delta, "distinct" the rest, "hard" the lowest
// hard_fraction.
struct SplitAccuracy {
  double distinct = 0.0;
  double ambiguous = 0.0;
  double hard = 0.0;
  double delta_threshold = 0.0;
  double hard_threshold = 0.0;
};

SplitAccuracy evaluate_ambiguity_splits(const ScoringModel& model,
                                        const PreferenceDataset& dataset,
                                        double ambiguous_fraction = 0.5,
                                        double hard_fraction = 0.2);

// Seeded random configurations meeting the preconditions of one bound.
struct FuzzCase {
  std::size_t index = 0;
  std::string description;
  BoundCheck check;
};

std::vector<FuzzCase> run_bound_fuzz(BoundKind kind, int cases, std::uint64_t seed,
                                     const VerifyOptions& options = {});

}  // namespace sarank

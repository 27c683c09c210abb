#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "sarank/generators.hpp"
#include "sarank/preference_data.hpp"
#include "sarank/scoring_model.hpp"
#include "sarank/surrogate_loss.hpp"

namespace sarank {

inline constexpr double kDefaultSearchBound = 50.0;
inline constexpr double kDefaultSearchTolerance = 1e-9;
inline constexpr double kDefaultSlackTolerance = 1e-9;

// Hypothesis classes whose best-in-class quantities the engine computes.
//
//   tabular_free      one free score difference per pair, u in [-U, U]
//   tabular_capacity  the same with u in [-K, K]
//   quantized         u in {k gamma : k != 0, |k gamma| <= U}
//   linear_trained    a restricted class; the best surrogate risk is the
//                     trainer's best value and is only an upper bound
enum class ModelClassKind { tabular_free, tabular_capacity, quantized, linear_trained };

std::string_view to_string(ModelClassKind kind);
ModelClassKind model_class_kind_from_string(std::string_view name);

struct ModelClass {
  ModelClassKind kind = ModelClassKind::tabular_free;
  double bound = kDefaultSearchBound;  // U, or K for tabular_capacity
  double gamma = 0.0;                  // lattice step for quantized
  double best_surrogate_found = std::numeric_limits<double>::quiet_NaN();

  static ModelClass tabular_free(double U = kDefaultSearchBound) {
    return {ModelClassKind::tabular_free, U, 0.0};
  }
  static ModelClass tabular_capacity(double K) { return {ModelClassKind::tabular_capacity, K, 0.0}; }
  static ModelClass quantized(double gamma, double U = kDefaultSearchBound) {
    return {ModelClassKind::quantized, U, gamma};
  }
  static ModelClass linear_trained(double best_surrogate, double U = kDefaultSearchBound) {
    return {ModelClassKind::linear_trained, U, 0.0, best_surrogate};
  }

  void validate() const;
};

struct RiskReport {
  double target_risk = std::numeric_limits<double>::quiet_NaN();
  double surrogate_risk = std::numeric_limits<double>::quiet_NaN();
  double best_target = 0.0;
  double best_surrogate = 0.0;
  double minimizability_gap_target = 0.0;
  double minimizability_gap_surrogate = 0.0;
  double approximation_gap = 0.0;
  double expected_conditional_target = 0.0;     // E[C*(H)]
  double expected_conditional_surrogate = 0.0;  // E[C*_Phi(H)]
  bool best_surrogate_is_upper_bound = false;
  double search_bound = kDefaultSearchBound;
  double tolerance = kDefaultSearchTolerance;
};

enum class BoundKind { hard_margin, gamma_shifted, structure_aware };

std::string_view to_string(BoundKind kind);

struct BoundCheck {
  BoundKind kind = BoundKind::gamma_shifted;
  double lhs = 0.0;
  double rhs = 0.0;
  double coefficient = 1.0;
  double slack = 0.0;
  double approximation_gap = 0.0;
  // lhs / surrogate estimation term; only set by tightness_witness.
  double ratio = std::numeric_limits<double>::quiet_NaN();

  bool holds(double tolerance = kDefaultSlackTolerance) const { return slack >= -tolerance; }
};

nlohmann::json to_json(const RiskReport& report);
nlohmann::json to_json(const BoundCheck& check);

// Delta h for every example, in dataset order.
std::vector<double> margins(const ScoringModel& model, const PreferenceDataset& dataset);

// sum mass * [eta 1{dh <= 0} + (1 - eta) 1{-dh <= 0}]. Ties are errors both ways.
double target_risk(const ScoringModel& model, const PreferenceDataset& dataset);
double target_risk_from_margins(const PreferenceDataset& dataset,
                                const std::vector<double>& margins);

// sum mass * [eta Phi_eff(dh) + (1 - eta) Phi_eff(-dh)].
double surrogate_risk(const ScoringModel& model, const PreferenceDataset& dataset,
                      const SurrogateLoss& loss, const MarginSpec& spec);
double surrogate_risk_from_margins(const PreferenceDataset& dataset,
                                   const std::vector<double>& margins,
                                   const SurrogateLoss& loss, const MarginSpec& spec);

struct ConditionalInfimum {
  double value = 0.0;
  double argmin = 0.0;
};

// inf over u in [-U, U] of eta Phi_eff(u) + (1 - eta) Phi_eff(-u): grid scan
// with step U/1000, golden-section refinement to tol, then bisection on the
// derivative when it changes sign inside the final bracket.
ConditionalInfimum conditional_infimum(const SurrogateLoss& loss, const MarginSpec& spec,
                                       double eta, double delta,
                                       double U = kDefaultSearchBound,
                                       double tol = kDefaultSearchTolerance);

// The same infimum over the lattice {k gamma : k != 0, |k gamma| <= U}.
ConditionalInfimum lattice_conditional_infimum(const SurrogateLoss& loss,
                                               const MarginSpec& spec, double eta,
                                               double delta, double gamma, double U);

// Class quantities. When `model` is given the report also carries its risks.
RiskReport gaps(const PreferenceDataset& dataset, const SurrogateLoss& loss,
                const MarginSpec& spec, const ModelClass& model_class,
                const ScoringModel* model = nullptr);

struct VerifyOptions {
  double tolerance = kDefaultSlackTolerance;
  // Multiplies the bound coefficient. Values below 1 deliberately break the
  // bound so that the checker can be shown to fail.
  double coefficient_scale = 1.0;
};

// Selects the bound by margin kind and class: quantized class with no margin gives
// the hard-margin bound, uniform margins the shifted bound, structure-aware
// margins the structure-aware bound, and no margin elsewhere the shifted
// bound at gamma = 0. Throws PreconditionError naming the first pair that
// violates hard-margin class membership.
BoundCheck verify_bound(const ScoringModel& model, const PreferenceDataset& dataset,
                        const SurrogateLoss& loss, const MarginSpec& spec,
                        const ModelClass& model_class, const VerifyOptions& options = {});

// Single tuple with w = 1, boundary hypothesis dh = 0, class [-U, U].
// Throws WitnessInvalidError when Phi is not monotone or the escape value
// Phi(U - gamma) exceeds tol.
BoundCheck tightness_witness(const SurrogateLoss& loss, double gamma,
                             double U = kDefaultSearchBound, double tol = kDefaultSlackTolerance);

struct NegativeDemoRow {
  double epsilon = 0.0;
  // Zero hypothesis against R*_Phi = Phi(epsilon).
  double surrogate_estimation_error = 0.0;
  double target_estimation_error = 0.0;
  // Squashed hypothesis with dh = +epsilon on the w = -1 tuple.
  double squashed_surrogate_risk = 0.0;
  double squashed_target_error = 0.0;
};

std::vector<NegativeDemoRow> negative_demo(const SurrogateLoss& loss,
                                           const NegativeConstruction& construction);

struct ScalingRow {
  double alpha = 0.0;
  double approximation_gap_upper = 0.0;
};

// Throws PreconditionError unless the model separates the data and has no
// capacity bound; DomainError unless alphas are positive and increasing.
std::vector<ScalingRow> scaling_sweep(const ScoringModel& model,
                                      const PreferenceDataset& dataset,
                                      const SurrogateLoss& loss, double gamma,
                                      const std::vector<double>& alphas);

struct BtMinimizability {
  double gap = 0.0;                 // R_Phi(r*) - E[C*_Phi]
  double max_argmin_error = 0.0;    // max |u* - dr*|
  bool argmins_match = false;       // max_argmin_error <= 10 tol
};

// Logistic (beta = 1) check on a dataset with stored latent rewards.
// Throws DomainError when a reward is missing.
BtMinimizability bt_minimizability_check(const LatentDataset& data,
                                         double U = kDefaultSearchBound, double tol = 1e-8);

}  // namespace sarank

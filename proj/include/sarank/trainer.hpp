#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "json.hpp"
#include "sarank/preference_data.hpp"
#include "sarank/scoring_model.hpp"
#include "sarank/surrogate_loss.hpp"

namespace sarank {

struct OptimizerConfig {
  double step_size = 0.1;
  double momentum = 0.9;
  int max_steps = 1000;
  double grad_tol = 1e-10;
  std::uint64_t seed = 0;

  // Throws ConfigError.
  void validate() const;
};

void to_json(nlohmann::json& j, const OptimizerConfig& cfg);
// Missing keys keep their defaults; unknown keys are rejected.
void from_json(const nlohmann::json& j, OptimizerConfig& cfg);

struct TrainStep {
  int step = 0;
  double surrogate_risk = 0.0;
  double target_risk = 0.0;
  double pairwise_accuracy = 0.0;
  double min_signed_margin = 0.0;
};

struct TrainTrace {
  std::vector<TrainStep> steps;
  ScoringModel final_model;
  double initial_surrogate_risk = 0.0;
  bool converged = false;       // stopped on grad_tol
  int monotone_violations = 0;  // steps whose surrogate risk rose
  double mean_signed_margin = 0.0;

  const TrainStep& last() const { return steps.back(); }
};

// Mass-weighted fraction of pairs whose score difference has the sign of
// eta - 0.5. Pairs with eta = 0.5 are left out; ties count as wrong.
// NaN when every pair has eta = 0.5.
double pairwise_accuracy(const PreferenceDataset& dataset, const std::vector<double>& margins);

// min and mass-weighted mean of sign(eta - 0.5) * dh over pairs with eta != 0.5.
double min_signed_margin(const PreferenceDataset& dataset, const std::vector<double>& margins);
double mean_signed_margin(const PreferenceDataset& dataset, const std::vector<double>& margins);

// Full-batch gradient descent with momentum on the exact surrogate risk,
// projecting onto the capacity box after every step. Throws
// NotTrainableError for quantized models and DivergenceError when the risk
// or gradient stops being finite.
TrainTrace train(ScoringModel model, const PreferenceDataset& dataset, const SurrogateLoss& loss,
                 const MarginSpec& spec, const OptimizerConfig& cfg);

// Gradient of the surrogate risk with respect to the model parameters.
std::vector<double> risk_gradient(const ScoringModel& model, const PreferenceDataset& dataset,
                                  const SurrogateLoss& loss, const MarginSpec& spec);

// step,surrogate_risk,target_risk,pairwise_accuracy,min_signed_margin
std::string trace_csv(const TrainTrace& trace);

}  // namespace sarank

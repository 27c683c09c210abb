#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "json.hpp"

namespace sarank {

enum class LossFamily { logistic, exponential, poly_hinge, squared_ipo, gce, mae };

std::string_view to_string(LossFamily family);
LossFamily loss_family_from_string(std::string_view name);

// A surrogate Phi for the signed score difference u = w * (h(x,y) - h(x,y')).
//
//   logistic     log(1 + exp(-beta u))
//   exponential  exp(-beta u)
//   poly_hinge   max(0, 1 - u)^degree
//   squared_ipo  (u - beta / 2)^2        (not monotone; eval/grad/training only)
//   gce          (1 - sigmoid(u)^q) / q
//   mae          1 - sigmoid(u)
//
// Only the parameter relevant to the family is read; the others keep their
// defaults so that JSON round-trips are stable.
struct SurrogateLoss {
  LossFamily family = LossFamily::logistic;
  double beta = 1.0;
  int degree = 1;
  double q = 0.7;

  static SurrogateLoss logistic(double beta = 1.0) { return {LossFamily::logistic, beta, 1, 0.7}; }
  static SurrogateLoss exponential(double beta = 1.0) { return {LossFamily::exponential, beta, 1, 0.7}; }
  static SurrogateLoss poly_hinge(int degree) { return {LossFamily::poly_hinge, 1.0, degree, 0.7}; }
  static SurrogateLoss squared_ipo(double beta = 1.0) { return {LossFamily::squared_ipo, beta, 1, 0.7}; }
  static SurrogateLoss gce(double q) { return {LossFamily::gce, 1.0, 1, q}; }
  static SurrogateLoss mae() { return {LossFamily::mae, 1.0, 1, 0.7}; }

  // Throws DomainError on an invalid parameter for the family.
  void validate() const;

  // True for every family whose Phi is non-increasing (all but squared_ipo).
  bool is_monotone() const { return family != LossFamily::squared_ipo; }

  // gce and mae saturate as u -> -inf.
  bool is_bounded() const { return family == LossFamily::gce || family == LossFamily::mae; }

  // Short human label, e.g. "poly_hinge(k=3)".
  std::string label() const;

  bool operator==(const SurrogateLoss&) const = default;
};

enum class MarginKind { none, uniform, structure_aware };

std::string_view to_string(MarginKind kind);
MarginKind margin_kind_from_string(std::string_view name);

struct MarginSpec {
  MarginKind kind = MarginKind::none;
  double gamma = 0.0;
  double tau = 1.0;
  bool inverse_weighting = false;

  static MarginSpec none() { return {}; }
  static MarginSpec uniform(double gamma) { return {MarginKind::uniform, gamma, 1.0, false}; }
  static MarginSpec structure_aware(double tau, bool inverse_weighting = false) {
    return {MarginKind::structure_aware, 0.0, tau, inverse_weighting};
  }

  void validate() const;

  // gamma for uniform, tau * delta for structure-aware, 0 for none.
  double effective_margin(double delta) const;

  bool operator==(const MarginSpec&) const = default;
};

double eval_loss(const SurrogateLoss& loss, double u);

// Phi'(u). The poly_hinge kink at u = 1 returns the right derivative 0.
double eval_grad(const SurrogateLoss& loss, double u);

// Phi(u - margin), divided by Phi(-Gamma) when the structure-aware margin asks
// for inverse-margin weighting.
double eval_shifted(const SurrogateLoss& loss, const MarginSpec& spec, double u,
                    double delta);

// d/du of eval_shifted.
double eval_shifted_grad(const SurrogateLoss& loss, const MarginSpec& spec,
                         double u, double delta);

// 1 / (Phi(-gamma) - Phi(gamma)), the hard-margin coefficient.
double consistency_coefficient_hard(const SurrogateLoss& loss, double gamma);

// 1 / Phi(-gamma), the margin-shifted coefficient.
double consistency_coefficient_shifted(const SurrogateLoss& loss, double gamma);

// Phi(K - gamma) / Phi(-gamma).
double margin_capacity_profile(const SurrogateLoss& loss, double gamma, double capacity);

// K + log(epsilon / (beta K)) / beta. May be negative when capacity dominates.
double optimal_margin_logistic(double beta, double capacity, double epsilon);

// C such that Phi(u - gamma) == C * Phi(u) on the grid [-20, 20] (step 0.4)
// to relative tolerance 1e-9, or nullopt when no such constant exists.
std::optional<double> shift_invariance_factor(const SurrogateLoss& loss, double gamma);

void to_json(nlohmann::json& j, const SurrogateLoss& loss);
void from_json(const nlohmann::json& j, SurrogateLoss& loss);
void to_json(nlohmann::json& j, const MarginSpec& spec);
void from_json(const nlohmann::json& j, MarginSpec& spec);

}  // namespace sarank

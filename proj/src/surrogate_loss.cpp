#include "sarank/surrogate_loss.hpp"

#include <cmath>
#include <string>

#include "sarank/error.hpp"
#include "sarank/json_util.hpp"
#include "sarank/numeric.hpp"

namespace sarank {

namespace {

void require_finite(double u, const char* op) {
  if (!std::isfinite(u)) {
    throw DomainError(std::string(op) + ": argument must be finite");
  }
}

double int_pow(double base, int exponent) {
  double result = 1.0;
  for (int i = 0; i < exponent; ++i) result *= base;
  return result;
}

void require_monotone(const SurrogateLoss& loss, const char* op) {
  if (!loss.is_monotone()) {
    throw DomainError(std::string(op) + ": " + loss.label() +
                      " is not non-increasing; coefficient operations do not apply");
  }
}

}  // namespace

std::string_view to_string(LossFamily family) {
  switch (family) {
    case LossFamily::logistic: return "logistic";
    case LossFamily::exponential: return "exponential";
    case LossFamily::poly_hinge: return "poly_hinge";
    case LossFamily::squared_ipo: return "squared_ipo";
    case LossFamily::gce: return "gce";
    case LossFamily::mae: return "mae";
  }
  return "unknown";
}

LossFamily loss_family_from_string(std::string_view name) {
  for (auto f : {LossFamily::logistic, LossFamily::exponential, LossFamily::poly_hinge,
                 LossFamily::squared_ipo, LossFamily::gce, LossFamily::mae}) {
    if (to_string(f) == name) return f;
  }
  throw ConfigError("unknown loss family \"" + std::string(name) + "\"");
}

void SurrogateLoss::validate() const {
  switch (family) {
    case LossFamily::logistic:
    case LossFamily::exponential:
    case LossFamily::squared_ipo:
      if (!(beta > 0.0) || !std::isfinite(beta)) {
        throw ConfigError(label() + ": beta must be positive and finite");
      }
      break;
    case LossFamily::poly_hinge:
      if (degree < 1) throw ConfigError(label() + ": degree must be >= 1");
      break;
    case LossFamily::gce:
      if (!(q > 0.0 && q <= 1.0)) throw ConfigError(label() + ": q must lie in (0, 1]");
      break;
    case LossFamily::mae:
      break;
  }
}

std::string SurrogateLoss::label() const {
  switch (family) {
    case LossFamily::logistic: return "logistic(beta=" + format_number(beta) + ")";
    case LossFamily::exponential: return "exponential(beta=" + format_number(beta) + ")";
    case LossFamily::poly_hinge: return "poly_hinge(k=" + std::to_string(degree) + ")";
    case LossFamily::squared_ipo: return "squared_ipo(beta=" + format_number(beta) + ")";
    case LossFamily::gce: return "gce(q=" + format_number(q) + ")";
    case LossFamily::mae: return "mae";
  }
  return "unknown";
}

std::string_view to_string(MarginKind kind) {
  switch (kind) {
    case MarginKind::none: return "none";
    case MarginKind::uniform: return "uniform";
    case MarginKind::structure_aware: return "structure_aware";
  }
  return "unknown";
}

MarginKind margin_kind_from_string(std::string_view name) {
  for (auto k : {MarginKind::none, MarginKind::uniform, MarginKind::structure_aware}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown margin kind \"" + std::string(name) + "\"");
}

void MarginSpec::validate() const {
  if (kind == MarginKind::uniform && !(gamma >= 0.0 && std::isfinite(gamma))) {
    throw ConfigError("uniform margin requires finite gamma >= 0");
  }
  if (kind == MarginKind::structure_aware && !(tau > 0.0 && std::isfinite(tau))) {
    throw ConfigError("structure-aware margin requires finite tau > 0");
  }
  if (inverse_weighting && kind != MarginKind::structure_aware) {
    throw ConfigError("inverse_weighting is only defined for structure-aware margins");
  }
}

double MarginSpec::effective_margin(double delta) const {
  switch (kind) {
    case MarginKind::none: return 0.0;
    case MarginKind::uniform: return gamma;
    case MarginKind::structure_aware: return tau * delta;
  }
  return 0.0;
}

double eval_loss(const SurrogateLoss& loss, double u) {
  require_finite(u, "eval_loss");
  switch (loss.family) {
    case LossFamily::logistic:
      return softplus(-loss.beta * u);
    case LossFamily::exponential:
      return std::exp(-loss.beta * u);
    case LossFamily::poly_hinge: {
      const double t = 1.0 - u;
      return t > 0.0 ? int_pow(t, loss.degree) : 0.0;
    }
    case LossFamily::squared_ipo: {
      const double t = u - loss.beta / 2.0;
      return t * t;
    }
    case LossFamily::gce:
      return -std::expm1(loss.q * log_sigmoid(u)) / loss.q;
    case LossFamily::mae:
      return sigmoid(-u);
  }
  return 0.0;
}

double eval_grad(const SurrogateLoss& loss, double u) {
  require_finite(u, "eval_grad");
  switch (loss.family) {
    case LossFamily::logistic:
      return -loss.beta * sigmoid(-loss.beta * u);
    case LossFamily::exponential:
      return -loss.beta * std::exp(-loss.beta * u);
    case LossFamily::poly_hinge: {
      const double t = 1.0 - u;
      return t > 0.0 ? -loss.degree * int_pow(t, loss.degree - 1) : 0.0;
    }
    case LossFamily::squared_ipo:
      return 2.0 * (u - loss.beta / 2.0);
    case LossFamily::gce:
      return -std::exp(loss.q * log_sigmoid(u)) * sigmoid(-u);
    case LossFamily::mae:
      return -sigmoid(u) * sigmoid(-u);
  }
  return 0.0;
}

namespace {

double inverse_weight(const SurrogateLoss& loss, const MarginSpec& spec, double margin) {
  if (!spec.inverse_weighting) return 1.0;
  const double normalizer = eval_loss(loss, -margin);
  if (!(normalizer > 0.0)) {
    throw DegenerateError("inverse-margin weight: Phi(-Gamma) is zero for " + loss.label());
  }
  return 1.0 / normalizer;
}

}  // namespace

double eval_shifted(const SurrogateLoss& loss, const MarginSpec& spec, double u,
                    double delta) {
  const double margin = spec.effective_margin(delta);
  return eval_loss(loss, u - margin) * inverse_weight(loss, spec, margin);
}

double eval_shifted_grad(const SurrogateLoss& loss, const MarginSpec& spec, double u,
                         double delta) {
  const double margin = spec.effective_margin(delta);
  return eval_grad(loss, u - margin) * inverse_weight(loss, spec, margin);
}

double consistency_coefficient_hard(const SurrogateLoss& loss, double gamma) {
  require_finite(gamma, "consistency_coefficient_hard");
  require_monotone(loss, "consistency_coefficient_hard");
  if (gamma < 0.0) throw DomainError("consistency_coefficient_hard: gamma must be >= 0");
  const double gap = eval_loss(loss, -gamma) - eval_loss(loss, gamma);
  if (!(gap > 0.0)) {
    throw DegenerateError("hard-margin coefficient: Phi(-gamma) == Phi(gamma), bound is vacuous");
  }
  return 1.0 / gap;
}

double consistency_coefficient_shifted(const SurrogateLoss& loss, double gamma) {
  require_finite(gamma, "consistency_coefficient_shifted");
  require_monotone(loss, "consistency_coefficient_shifted");
  if (gamma < 0.0) throw DomainError("consistency_coefficient_shifted: gamma must be >= 0");
  const double normalizer = eval_loss(loss, -gamma);
  if (!(normalizer > 0.0)) {
    throw DegenerateError("shifted coefficient: Phi(-gamma) is zero");
  }
  return 1.0 / normalizer;
}

double margin_capacity_profile(const SurrogateLoss& loss, double gamma, double capacity) {
  require_finite(gamma, "margin_capacity_profile");
  require_finite(capacity, "margin_capacity_profile");
  require_monotone(loss, "margin_capacity_profile");
  if (capacity < 0.0) throw DomainError("margin_capacity_profile: K must be >= 0");
  const double normalizer = eval_loss(loss, -gamma);
  if (!(normalizer > 0.0)) {
    throw DegenerateError("margin-capacity profile: Phi(-gamma) is zero");
  }
  if (capacity == 0.0) return 1.0;
  return eval_loss(loss, capacity - gamma) / normalizer;
}

double optimal_margin_logistic(double beta, double capacity, double epsilon) {
  if (!(beta > 0.0) || !(capacity > 0.0) || !(epsilon > 0.0) || !std::isfinite(beta) ||
      !std::isfinite(capacity) || !std::isfinite(epsilon)) {
    throw DomainError("optimal_margin_logistic: beta, K and epsilon must be positive");
  }
  return capacity + std::log(epsilon / (beta * capacity)) / beta;
}

std::optional<double> shift_invariance_factor(const SurrogateLoss& loss, double gamma) {
  require_finite(gamma, "shift_invariance_factor");
  if (gamma < 0.0) throw DomainError("shift_invariance_factor: gamma must be >= 0");
  const double at_zero = eval_loss(loss, 0.0);
  if (!(at_zero > 0.0)) return std::nullopt;
  const double factor = eval_loss(loss, -gamma) / at_zero;
  constexpr int kPoints = 101;
  for (int i = 0; i < kPoints; ++i) {
    const double u = -20.0 + 0.4 * i;
    const double shifted = eval_loss(loss, u - gamma);
    const double scaled = factor * eval_loss(loss, u);
    const double scale = std::max(std::abs(shifted), std::abs(scaled));
    if (std::abs(shifted - scaled) > 1e-9 * scale) return std::nullopt;
  }
  return factor;
}

void to_json(nlohmann::json& j, const SurrogateLoss& loss) {
  j = nlohmann::json{{"family", std::string(to_string(loss.family))},
                     {"beta", loss.beta},
                     {"degree", loss.degree},
                     {"q", loss.q}};
}

void from_json(const nlohmann::json& j, SurrogateLoss& loss) {
  constexpr std::string_view ctx = "loss";
  json_util::reject_unknown(j, {"family", "beta", "degree", "q"}, ctx);
  const auto& family = json_util::require(j, "family", ctx);
  if (!family.is_string()) throw SchemaError("loss: field \"family\" must be a string");
  SurrogateLoss out;
  out.family = loss_family_from_string(family.get<std::string>());
  out.beta = json_util::number_or(j, "beta", out.beta, ctx);
  out.degree = static_cast<int>(json_util::integer_or(j, "degree", out.degree, ctx));
  out.q = json_util::number_or(j, "q", out.q, ctx);
  out.validate();
  loss = out;
}

void to_json(nlohmann::json& j, const MarginSpec& spec) {
  j = nlohmann::json{{"kind", std::string(to_string(spec.kind))},
                     {"gamma", spec.gamma},
                     {"tau", spec.tau},
                     {"inverse_weighting", spec.inverse_weighting}};
}

void from_json(const nlohmann::json& j, MarginSpec& spec) {
  constexpr std::string_view ctx = "margin";
  json_util::reject_unknown(j, {"kind", "gamma", "tau", "inverse_weighting"}, ctx);
  const auto& kind = json_util::require(j, "kind", ctx);
  if (!kind.is_string()) throw SchemaError("margin: field \"kind\" must be a string");
  MarginSpec out;
  out.kind = margin_kind_from_string(kind.get<std::string>());
  out.gamma = json_util::number_or(j, "gamma", out.gamma, ctx);
  out.tau = json_util::number_or(j, "tau", out.tau, ctx);
  out.inverse_weighting = json_util::bool_or(j, "inverse_weighting", false, ctx);
  out.validate();
  spec = out;
}

}  // namespace sarank

#include "sarank/risk_engine.hpp"

#include <algorithm>
#include <cmath>

#include "sarank/error.hpp"
#include "sarank/numeric.hpp"

namespace sarank {

namespace {

std::string pair_name(const PreferenceExample& e) {
  return "(" + e.x + ", " + e.y + ", " + e.y_prime + ")";
}

// eta Phi_eff(u) + (1 - eta) Phi_eff(-u); zero weights skip their term so an
// overflowing Phi on the unused side cannot produce 0 * inf.
double conditional_risk(const SurrogateLoss& loss, const MarginSpec& spec, double eta,
                        double delta, double u) {
  double v = 0.0;
  if (eta > 0.0) v += eta * eval_shifted(loss, spec, u, delta);
  if (eta < 1.0) v += (1.0 - eta) * eval_shifted(loss, spec, -u, delta);
  return v;
}

double conditional_risk_grad(const SurrogateLoss& loss, const MarginSpec& spec, double eta,
                             double delta, double u) {
  double g = 0.0;
  if (eta > 0.0) g += eta * eval_shifted_grad(loss, spec, u, delta);
  if (eta < 1.0) g -= (1.0 - eta) * eval_shifted_grad(loss, spec, -u, delta);
  return g;
}

double best_conditional_target(const PreferenceDataset& dataset) {
  CompensatedSum total;
  for (const auto& e : dataset.examples()) total += e.mass * std::min(e.eta, 1.0 - e.eta);
  return total.value();
}

// Smallest effective margin over the dataset; the unweighted structure-aware
// bound divides by Phi(-Gamma_min).
double min_effective_margin(const PreferenceDataset& dataset, const MarginSpec& spec) {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& e : dataset.examples()) m = std::min(m, spec.effective_margin(e.delta));
  return dataset.empty() ? 0.0 : m;
}

bool is_convex_family(const SurrogateLoss& loss) {
  return loss.family == LossFamily::logistic || loss.family == LossFamily::exponential ||
         loss.family == LossFamily::poly_hinge;
}

}  // namespace

std::string_view to_string(ModelClassKind kind) {
  switch (kind) {
    case ModelClassKind::tabular_free: return "tabular_free";
    case ModelClassKind::tabular_capacity: return "tabular_capacity";
    case ModelClassKind::quantized: return "quantized";
    case ModelClassKind::linear_trained: return "linear_trained";
  }
  return "tabular_free";
}

ModelClassKind model_class_kind_from_string(std::string_view name) {
  if (name == "tabular_free") return ModelClassKind::tabular_free;
  if (name == "tabular_capacity") return ModelClassKind::tabular_capacity;
  if (name == "quantized") return ModelClassKind::quantized;
  if (name == "linear_trained") return ModelClassKind::linear_trained;
  throw DomainError("unknown model class \"" + std::string(name) + "\"");
}

void ModelClass::validate() const {
  if (!(bound > 0.0) || !std::isfinite(bound)) {
    throw DomainError("model class: search bound must be positive and finite");
  }
  if (kind == ModelClassKind::quantized && !(gamma > 0.0 && gamma <= bound)) {
    throw DomainError("model class: quantized gamma must lie in (0, U]");
  }
  if (kind == ModelClassKind::linear_trained && !std::isfinite(best_surrogate_found)) {
    throw DomainError("model class: linear_trained needs the best surrogate risk found");
  }
}

std::string_view to_string(BoundKind kind) {
  switch (kind) {
    case BoundKind::hard_margin: return "hard_margin";
    case BoundKind::gamma_shifted: return "gamma_shifted";
    case BoundKind::structure_aware: return "structure_aware";
  }
  return "gamma_shifted";
}

nlohmann::json to_json(const RiskReport& r) {
  return {{"target_risk", r.target_risk},
          {"surrogate_risk", r.surrogate_risk},
          {"best_target", r.best_target},
          {"best_surrogate", r.best_surrogate},
          {"minimizability_gap_target", r.minimizability_gap_target},
          {"minimizability_gap_surrogate", r.minimizability_gap_surrogate},
          {"approximation_gap", r.approximation_gap},
          {"expected_conditional_target", r.expected_conditional_target},
          {"expected_conditional_surrogate", r.expected_conditional_surrogate},
          {"best_surrogate_is_upper_bound", r.best_surrogate_is_upper_bound},
          {"search_bound", r.search_bound},
          {"tolerance", r.tolerance}};
}

nlohmann::json to_json(const BoundCheck& c) {
  nlohmann::json j = {{"bound_kind", to_string(c.kind)},
                      {"lhs", c.lhs},
                      {"rhs", c.rhs},
                      {"coefficient", c.coefficient},
                      {"slack", c.slack},
                      {"approximation_gap", c.approximation_gap}};
  if (std::isfinite(c.ratio)) j["ratio"] = c.ratio;
  return j;
}

std::vector<double> margins(const ScoringModel& model, const PreferenceDataset& dataset) {
  std::vector<double> out;
  out.reserve(dataset.size());
  for (const auto& e : dataset.examples()) out.push_back(model.signed_margin(e));
  return out;
}

double target_risk_from_margins(const PreferenceDataset& dataset,
                                const std::vector<double>& dh) {
  require_normalized(dataset, "target_risk");
  CompensatedSum total;
  const auto& ex = dataset.examples();
  for (std::size_t i = 0; i < ex.size(); ++i) {
    double err = 0.0;
    if (dh[i] <= 0.0) err += ex[i].eta;
    if (-dh[i] <= 0.0) err += 1.0 - ex[i].eta;
    total += ex[i].mass * err;
  }
  return total.value();
}

double target_risk(const ScoringModel& model, const PreferenceDataset& dataset) {
  return target_risk_from_margins(dataset, margins(model, dataset));
}

double surrogate_risk_from_margins(const PreferenceDataset& dataset,
                                   const std::vector<double>& dh, const SurrogateLoss& loss,
                                   const MarginSpec& spec) {
  require_normalized(dataset, "surrogate_risk");
  CompensatedSum total;
  const auto& ex = dataset.examples();
  for (std::size_t i = 0; i < ex.size(); ++i) {
    total += ex[i].mass * conditional_risk(loss, spec, ex[i].eta, ex[i].delta, dh[i]);
  }
  return total.value();
}

double surrogate_risk(const ScoringModel& model, const PreferenceDataset& dataset,
                      const SurrogateLoss& loss, const MarginSpec& spec) {
  return surrogate_risk_from_margins(dataset, margins(model, dataset), loss, spec);
}

ConditionalInfimum conditional_infimum(const SurrogateLoss& loss, const MarginSpec& spec,
                                       double eta, double delta, double U, double tol) {
  if (!(U > 0.0) || !(tol > 0.0)) {
    throw DomainError("conditional_infimum: U and tol must be positive");
  }
  auto g = [&](double u) { return conditional_risk(loss, spec, eta, delta, u); };
  constexpr int kIntervals = 2000;  // step U / 1000 over [-U, U]
  const ScalarMinimum coarse = grid_then_golden(g, -U, U, kIntervals, tol);
  ConditionalInfimum best{coarse.value, coarse.argmin};

  const double step = U / 1000.0;
  double a = std::max(-U, coarse.argmin - step);
  double b = std::min(U, coarse.argmin + step);
  auto gp = [&](double u) { return conditional_risk_grad(loss, spec, eta, delta, u); };
  if (gp(a) < 0.0 && gp(b) > 0.0) {
    for (int it = 0; it < 200 && b - a > 0.0; ++it) {
      const double mid = 0.5 * (a + b);
      if (mid <= a || mid >= b) break;
      (gp(mid) < 0.0 ? a : b) = mid;
    }
    // g is flat to rounding near its minimum, so compare values with a
    // relative allowance and prefer the stationary point.
    const double u = 0.5 * (a + b);
    const double v = g(u);
    if (v <= best.value + 4.0 * std::numeric_limits<double>::epsilon() * std::abs(best.value)) {
      best = {std::min(v, best.value), u};
    }
  }
  return best;
}

ConditionalInfimum lattice_conditional_infimum(const SurrogateLoss& loss,
                                               const MarginSpec& spec, double eta,
                                               double delta, double gamma, double U) {
  if (!(gamma > 0.0) || !(U >= gamma)) {
    throw DomainError("lattice_conditional_infimum: need 0 < gamma <= U");
  }
  const auto n = static_cast<long long>(std::floor(U / gamma + 1e-9));
  if (n > 10'000'000) throw DomainError("lattice_conditional_infimum: lattice too fine");
  ConditionalInfimum best{std::numeric_limits<double>::infinity(), gamma};
  for (long long k = -n; k <= n; ++k) {
    if (k == 0) continue;
    const double u = static_cast<double>(k) * gamma;
    const double v = conditional_risk(loss, spec, eta, delta, u);
    if (v < best.value) best = {v, u};
  }
  return best;
}

RiskReport gaps(const PreferenceDataset& dataset, const SurrogateLoss& loss,
                const MarginSpec& spec, const ModelClass& cls, const ScoringModel* model) {
  require_normalized(dataset, "gaps");
  loss.validate();
  spec.validate();
  cls.validate();
  RiskReport r;
  r.search_bound = cls.bound;
  r.tolerance = kDefaultSearchTolerance;

  CompensatedSum cond_surrogate;
  for (const auto& e : dataset.examples()) {
    ConditionalInfimum c;
    if (cls.kind == ModelClassKind::quantized) {
      c = lattice_conditional_infimum(loss, spec, e.eta, e.delta, cls.gamma, cls.bound);
    } else {
      c = conditional_infimum(loss, spec, e.eta, e.delta, cls.bound, r.tolerance);
    }
    cond_surrogate += e.mass * c.value;
  }
  r.expected_conditional_target = best_conditional_target(dataset);
  r.expected_conditional_surrogate = cond_surrogate.value();

  // Every class here can realize both signs on every pair, so the 0-1 best
  // in class decomposes pairwise.
  r.best_target = r.expected_conditional_target;
  r.minimizability_gap_target = 0.0;
  if (cls.kind == ModelClassKind::linear_trained) {
    r.best_surrogate = cls.best_surrogate_found;
    r.best_surrogate_is_upper_bound = true;
    r.minimizability_gap_surrogate = r.best_surrogate - r.expected_conditional_surrogate;
  } else {
    r.best_surrogate = r.expected_conditional_surrogate;
    r.minimizability_gap_surrogate = 0.0;
  }

  switch (spec.kind) {
    case MarginKind::none:
      r.approximation_gap = r.expected_conditional_surrogate / eval_loss(loss, 0.0) -
                            r.expected_conditional_target;
      break;
    case MarginKind::uniform:
      r.approximation_gap =
          r.expected_conditional_surrogate * consistency_coefficient_shifted(loss, spec.gamma) -
          r.expected_conditional_target;
      break;
    case MarginKind::structure_aware:
      if (spec.inverse_weighting) {
        r.approximation_gap = r.expected_conditional_surrogate - r.expected_conditional_target;
      } else {
        const double coef =
            consistency_coefficient_shifted(loss, min_effective_margin(dataset, spec));
        r.approximation_gap =
            r.expected_conditional_surrogate * coef - r.expected_conditional_target;
      }
      break;
  }

  if (model != nullptr) {
    const auto dh = margins(*model, dataset);
    r.target_risk = target_risk_from_margins(dataset, dh);
    r.surrogate_risk = surrogate_risk_from_margins(dataset, dh, loss, spec);
  }
  return r;
}

BoundCheck verify_bound(const ScoringModel& model, const PreferenceDataset& dataset,
                        const SurrogateLoss& loss, const MarginSpec& spec,
                        const ModelClass& cls, const VerifyOptions& options) {
  require_normalized(dataset, "verify_bound");
  loss.validate();
  spec.validate();
  cls.validate();
  if (!loss.is_monotone()) {
    throw PreconditionError("verify_bound: " + loss.label() + " is not non-increasing");
  }
  const auto dh = margins(model, dataset);
  BoundCheck check;

  if (cls.kind == ModelClassKind::quantized && spec.kind == MarginKind::none) {
    check.kind = BoundKind::hard_margin;
    if (!is_convex_family(loss)) {
      throw PreconditionError("hard-margin bound needs a convex loss, got " + loss.label());
    }
    const double gamma = cls.gamma;
    const auto& ex = dataset.examples();
    for (std::size_t i = 0; i < ex.size(); ++i) {
      const double a = std::abs(dh[i]);
      const double k = a / gamma;
      const bool on_lattice = std::abs(k - std::round(k)) <= 1e-9 * std::max(1.0, k);
      if (a < gamma * (1.0 - 1e-12) || a > cls.bound * (1.0 + 1e-12) || !on_lattice) {
        throw PreconditionError("pair " + pair_name(ex[i]) + " has score difference " +
                                format_number(dh[i]) + " outside the hard-margin class (gamma=" +
                                format_number(gamma) + ")");
      }
    }
    RiskReport r = gaps(dataset, loss, spec, cls, nullptr);
    // The boundary members with dh = +gamma and dh = -gamma on every pair.
    const std::vector<double> plus(dataset.size(), gamma);
    const std::vector<double> minus(dataset.size(), -gamma);
    const double r_plus = surrogate_risk_from_margins(dataset, plus, loss, spec);
    const double r_minus = surrogate_risk_from_margins(dataset, minus, loss, spec);
    const double best_surrogate = std::min({r.expected_conditional_surrogate, r_plus, r_minus});
    const double R = target_risk_from_margins(dataset, dh);
    const double R_phi = surrogate_risk_from_margins(dataset, dh, loss, spec);
    check.coefficient = consistency_coefficient_hard(loss, gamma) * options.coefficient_scale;
    check.lhs = R - r.expected_conditional_target;
    check.rhs = check.coefficient * (R_phi - best_surrogate);
    check.approximation_gap = 0.0;
    check.slack = check.rhs - check.lhs;
    return check;
  }

  RiskReport r = gaps(dataset, loss, spec, cls, nullptr);
  const double R = target_risk_from_margins(dataset, dh);
  const double R_phi = surrogate_risk_from_margins(dataset, dh, loss, spec);
  switch (spec.kind) {
    case MarginKind::none:
      check.kind = BoundKind::gamma_shifted;
      check.coefficient = consistency_coefficient_shifted(loss, 0.0);
      break;
    case MarginKind::uniform:
      check.kind = BoundKind::gamma_shifted;
      check.coefficient = consistency_coefficient_shifted(loss, spec.gamma);
      break;
    case MarginKind::structure_aware:
      check.kind = BoundKind::structure_aware;
      check.coefficient =
          spec.inverse_weighting
              ? 1.0
              : consistency_coefficient_shifted(loss, min_effective_margin(dataset, spec));
      break;
  }
  check.coefficient *= options.coefficient_scale;
  check.approximation_gap = r.approximation_gap;
  check.lhs = R - r.best_target + r.minimizability_gap_target;
  check.rhs = check.coefficient * (R_phi - r.best_surrogate + r.minimizability_gap_surrogate) +
              r.approximation_gap;
  check.slack = check.rhs - check.lhs;
  return check;
}

BoundCheck tightness_witness(const SurrogateLoss& loss, double gamma, double U, double tol) {
  loss.validate();
  if (!loss.is_monotone()) {
    throw WitnessInvalidError("tightness witness: " + loss.label() + " is not non-increasing");
  }
  if (!(gamma >= 0.0) || !(U > gamma)) {
    throw DomainError("tightness witness: need 0 <= gamma < U");
  }
  const auto dataset =
      PreferenceDataset::from_examples({{"x0", "y0", "y1", 1.0, 1.0, 0.0}}, true);
  const MarginSpec spec = MarginSpec::uniform(gamma);
  const double escape = eval_shifted(loss, spec, U, 0.0);
  if (escape > tol) {
    throw WitnessInvalidError("tightness witness: escape value Phi(U - gamma) = " +
                              format_number(escape) + " does not vanish for " + loss.label() +
                              " at gamma=" + format_number(gamma) + ", U=" + format_number(U));
  }
  const ModelClass cls = ModelClass::tabular_free(U);
  RiskReport r = gaps(dataset, loss, spec, cls, nullptr);
  const std::vector<double> boundary{0.0};
  const double R = target_risk_from_margins(dataset, boundary);
  const double R_phi = surrogate_risk_from_margins(dataset, boundary, loss, spec);

  BoundCheck check;
  check.kind = BoundKind::gamma_shifted;
  check.coefficient = consistency_coefficient_shifted(loss, gamma);
  check.approximation_gap = r.approximation_gap;
  check.lhs = R - r.best_target;
  check.rhs = check.coefficient * (R_phi - r.best_surrogate) + r.approximation_gap;
  check.slack = check.rhs - check.lhs;
  check.ratio = check.lhs / R_phi;
  return check;
}

std::vector<NegativeDemoRow> negative_demo(const SurrogateLoss& loss,
                                           const NegativeConstruction& construction) {
  loss.validate();
  const auto& ds = construction.dataset;
  if (ds.size() != 1 || ds.examples()[0].eta != 0.0 || !ds.normalized()) {
    throw DomainError("negative_demo: construction must be one tuple with eta = 0 and mass 1");
  }
  const auto spec = MarginSpec::none();
  const double best_target = best_conditional_target(ds);
  const double zero_surrogate = surrogate_risk_from_margins(ds, {0.0}, loss, spec);
  const double zero_target = target_risk_from_margins(ds, {0.0});
  std::vector<NegativeDemoRow> rows;
  for (double eps : construction.epsilons) {
    NegativeDemoRow row;
    row.epsilon = eps;
    row.surrogate_estimation_error = zero_surrogate - eval_loss(loss, eps);
    row.target_estimation_error = zero_target - best_target;
    row.squashed_surrogate_risk = surrogate_risk_from_margins(ds, {eps}, loss, spec);
    row.squashed_target_error = target_risk_from_margins(ds, {eps}) - best_target;
    rows.push_back(row);
  }
  return rows;
}

std::vector<ScalingRow> scaling_sweep(const ScoringModel& model,
                                      const PreferenceDataset& dataset,
                                      const SurrogateLoss& loss, double gamma,
                                      const std::vector<double>& alphas) {
  if (model.capacity()) {
    throw PreconditionError("scaling_sweep: the model has a capacity bound K");
  }
  if (model.quantize_gamma()) {
    throw PreconditionError("scaling_sweep: quantized models are not closed under scaling");
  }
  if (alphas.empty()) throw DomainError("scaling_sweep: empty alpha list");
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    if (!(alphas[i] > 0.0) || (i > 0 && !(alphas[i] > alphas[i - 1]))) {
      throw DomainError("scaling_sweep: alphas must be positive and increasing");
    }
  }
  const auto dh = margins(model, dataset);
  const double R = target_risk_from_margins(dataset, dh);
  if (R != 0.0) {
    const auto& ex = dataset.examples();
    for (std::size_t i = 0; i < ex.size(); ++i) {
      if (ex[i].eta * (dh[i] <= 0.0) + (1.0 - ex[i].eta) * (dh[i] >= 0.0) > 0.0) {
        throw PreconditionError("scaling_sweep: model does not separate pair " +
                                pair_name(ex[i]));
      }
    }
  }
  const MarginSpec spec = MarginSpec::uniform(gamma);
  const double coef = consistency_coefficient_shifted(loss, gamma);
  std::vector<ScalingRow> rows;
  for (double alpha : alphas) {
    std::vector<double> scaled(dh.size());
    for (std::size_t i = 0; i < dh.size(); ++i) scaled[i] = alpha * dh[i];
    rows.push_back({alpha, coef * surrogate_risk_from_margins(dataset, scaled, loss, spec)});
  }
  return rows;
}

BtMinimizability bt_minimizability_check(const LatentDataset& data, double U, double tol) {
  const auto& ds = data.dataset;
  require_normalized(ds, "bt_minimizability_check");
  const SurrogateLoss loss = SurrogateLoss::logistic(1.0);
  const MarginSpec spec = MarginSpec::none();
  auto reward = [&](const std::string& x, const std::string& y) {
    auto it = data.rewards.find({x, y});
    if (it == data.rewards.end()) {
      throw DomainError("bt_minimizability_check: no latent reward for (" + x + ", " + y + ")");
    }
    return it->second;
  };
  CompensatedSum at_rewards;
  CompensatedSum infima;
  BtMinimizability out;
  for (const auto& e : ds.examples()) {
    const double dr = reward(e.x, e.y) - reward(e.x, e.y_prime);
    at_rewards += e.mass * conditional_risk(loss, spec, e.eta, e.delta, dr);
    const auto c = conditional_infimum(loss, spec, e.eta, e.delta, U, tol);
    infima += e.mass * c.value;
    out.max_argmin_error = std::max(out.max_argmin_error, std::abs(c.argmin - dr));
  }
  out.gap = at_rewards.value() - infima.value();
  out.argmins_match = out.max_argmin_error <= 10.0 * tol;
  return out;
}

}  // namespace sarank

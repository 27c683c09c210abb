#include "sarank/trainer.hpp"

#include <algorithm>
#include <cmath>

#include "sarank/error.hpp"
#include "sarank/json_util.hpp"
#include "sarank/numeric.hpp"
#include "sarank/risk_engine.hpp"

namespace sarank {

void OptimizerConfig::validate() const {
  if (!(step_size > 0.0) || !std::isfinite(step_size)) {
    throw ConfigError("optimizer: step_size must be positive");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw ConfigError("optimizer: momentum must lie in [0, 1)");
  }
  if (max_steps < 1) throw ConfigError("optimizer: max_steps must be >= 1");
  if (!(grad_tol > 0.0)) throw ConfigError("optimizer: grad_tol must be positive");
}

void to_json(nlohmann::json& j, const OptimizerConfig& cfg) {
  j = {{"step_size", cfg.step_size},
       {"momentum", cfg.momentum},
       {"max_steps", cfg.max_steps},
       {"grad_tol", cfg.grad_tol},
       {"seed", cfg.seed}};
}

void from_json(const nlohmann::json& j, OptimizerConfig& cfg) {
  json_util::reject_unknown(j, {"step_size", "momentum", "max_steps", "grad_tol", "seed"},
                            "optimizer");
  cfg.step_size = json_util::number_or(j, "step_size", cfg.step_size, "optimizer");
  cfg.momentum = json_util::number_or(j, "momentum", cfg.momentum, "optimizer");
  cfg.max_steps = static_cast<int>(json_util::integer_or(j, "max_steps", cfg.max_steps, "optimizer"));
  cfg.grad_tol = json_util::number_or(j, "grad_tol", cfg.grad_tol, "optimizer");
  const long long seed = json_util::integer_or(j, "seed", static_cast<long long>(cfg.seed), "optimizer");
  if (seed < 0) throw ConfigError("optimizer: seed must be >= 0");
  cfg.seed = static_cast<std::uint64_t>(seed);
  cfg.validate();
}

double pairwise_accuracy(const PreferenceDataset& dataset, const std::vector<double>& dh) {
  CompensatedSum correct;
  CompensatedSum total;
  const auto& ex = dataset.examples();
  for (std::size_t i = 0; i < ex.size(); ++i) {
    if (ex[i].eta == 0.5) continue;
    total += ex[i].mass;
    const bool right = ex[i].eta > 0.5 ? dh[i] > 0.0 : dh[i] < 0.0;
    if (right) correct += ex[i].mass;
  }
  if (total.value() <= 0.0) return std::numeric_limits<double>::quiet_NaN();
  return correct.value() / total.value();
}

double min_signed_margin(const PreferenceDataset& dataset, const std::vector<double>& dh) {
  double m = std::numeric_limits<double>::infinity();
  const auto& ex = dataset.examples();
  for (std::size_t i = 0; i < ex.size(); ++i) {
    if (ex[i].eta == 0.5) continue;
    m = std::min(m, ex[i].eta > 0.5 ? dh[i] : -dh[i]);
  }
  return std::isinf(m) ? std::numeric_limits<double>::quiet_NaN() : m;
}

double mean_signed_margin(const PreferenceDataset& dataset, const std::vector<double>& dh) {
  CompensatedSum sum;
  CompensatedSum total;
  const auto& ex = dataset.examples();
  for (std::size_t i = 0; i < ex.size(); ++i) {
    if (ex[i].eta == 0.5) continue;
    sum += ex[i].mass * (ex[i].eta > 0.5 ? dh[i] : -dh[i]);
    total += ex[i].mass;
  }
  if (total.value() <= 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sum.value() / total.value();
}

std::vector<double> risk_gradient(const ScoringModel& model, const PreferenceDataset& dataset,
                                  const SurrogateLoss& loss, const MarginSpec& spec) {
  std::vector<double> grad(model.num_params(), 0.0);
  for (const auto& e : dataset.examples()) {
    const double dh = model.signed_margin(e);
    double d = 0.0;
    if (e.eta > 0.0) d += e.eta * eval_shifted_grad(loss, spec, dh, e.delta);
    if (e.eta < 1.0) d -= (1.0 - e.eta) * eval_shifted_grad(loss, spec, -dh, e.delta);
    if (d != 0.0) model.accumulate_margin_grad(e, e.mass * d, grad);
  }
  return grad;
}

TrainTrace train(ScoringModel model, const PreferenceDataset& dataset, const SurrogateLoss& loss,
                 const MarginSpec& spec, const OptimizerConfig& cfg) {
  cfg.validate();
  loss.validate();
  spec.validate();
  require_normalized(dataset, "train");
  if (!model.trainable()) throw NotTrainableError("quantized models are not trainable");

  TrainTrace trace;
  model.project();
  trace.initial_surrogate_risk = surrogate_risk(model, dataset, loss, spec);
  double previous = trace.initial_surrogate_risk;
  std::vector<double> velocity(model.num_params(), 0.0);
  trace.steps.reserve(static_cast<std::size_t>(cfg.max_steps));

  for (int step = 1; step <= cfg.max_steps; ++step) {
    const auto grad = risk_gradient(model, dataset, loss, spec);
    double norm = 0.0;
    for (double g : grad) {
      if (!std::isfinite(g)) throw DivergenceError("gradient became non-finite", step);
      norm = std::max(norm, std::abs(g));
    }
    if (norm < cfg.grad_tol) {
      trace.converged = true;
      break;
    }
    auto& params = model.params();
    for (std::size_t i = 0; i < params.size(); ++i) {
      velocity[i] = cfg.momentum * velocity[i] - cfg.step_size * grad[i];
      params[i] += velocity[i];
    }
    model.project();

    const auto dh = margins(model, dataset);
    TrainStep rec;
    rec.step = step;
    rec.surrogate_risk = surrogate_risk_from_margins(dataset, dh, loss, spec);
    if (!std::isfinite(rec.surrogate_risk)) {
      throw DivergenceError("surrogate risk became non-finite", step);
    }
    rec.target_risk = target_risk_from_margins(dataset, dh);
    rec.pairwise_accuracy = pairwise_accuracy(dataset, dh);
    rec.min_signed_margin = min_signed_margin(dataset, dh);
    if (rec.surrogate_risk > previous + 1e-12 * std::max(1.0, std::abs(previous))) {
      ++trace.monotone_violations;
    }
    previous = rec.surrogate_risk;
    trace.steps.push_back(rec);
  }
  const auto dh = margins(model, dataset);
  if (trace.steps.empty()) {
    // Stationary from the start: keep one record of the untouched model.
    trace.steps.push_back({0, trace.initial_surrogate_risk, target_risk_from_margins(dataset, dh),
                           pairwise_accuracy(dataset, dh), min_signed_margin(dataset, dh)});
  }
  trace.mean_signed_margin = mean_signed_margin(dataset, dh);
  trace.final_model = std::move(model);
  return trace;
}

std::string trace_csv(const TrainTrace& trace) {
  std::string out = "step,surrogate_risk,target_risk,pairwise_accuracy,min_signed_margin\n";
  for (const auto& s : trace.steps) {
    out += std::to_string(s.step) + "," + format_number(s.surrogate_risk) + "," +
           format_number(s.target_risk) + "," + format_number(s.pairwise_accuracy) + "," +
           format_number(s.min_signed_margin) + "\n";
  }
  return out;
}

}  // namespace sarank

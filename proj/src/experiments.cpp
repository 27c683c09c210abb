#include "sarank/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>
#include <sstream>

#include "sarank/error.hpp"
#include "sarank/generators.hpp"
#include "sarank/numeric.hpp"
#include "sarank/parallel.hpp"

namespace sarank {

namespace {

nlohmann::json trace_summary(const TrainTrace& t) {
  const auto& last = t.last();
  return {{"final_surrogate_risk", last.surrogate_risk},
          {"final_target_risk", last.target_risk},
          {"final_pairwise_accuracy", last.pairwise_accuracy},
          {"min_signed_margin", last.min_signed_margin},
          {"mean_signed_margin", t.mean_signed_margin},
          {"steps", last.step},
          {"converged", t.converged},
          {"monotone_violations", t.monotone_violations}};
}

std::string column_name(const SurrogateLoss& loss) {
  switch (loss.family) {
    case LossFamily::poly_hinge: return "poly" + std::to_string(loss.degree);
    default: return std::string(to_string(loss.family));
  }
}

std::string param_text(const SurrogateLoss& loss) {
  switch (loss.family) {
    case LossFamily::logistic:
    case LossFamily::exponential:
    case LossFamily::squared_ipo: return format_number(loss.beta);
    case LossFamily::poly_hinge: return std::to_string(loss.degree);
    case LossFamily::gce: return format_number(loss.q);
    case LossFamily::mae: return "";
  }
  return "";
}

}  // namespace

void SynonymConfig::validate() const {
  if (n_pairs < 1) throw ConfigError("synonym: n_pairs must be >= 1");
  if (!(max_delta >= 0.0 && max_delta < 1.0)) throw ConfigError("synonym: max_delta must lie in [0, 1)");
  MarginSpec::uniform(gamma_fixed).validate();
  MarginSpec::structure_aware(tau).validate();
  SurrogateLoss::logistic(beta).validate();
  if (capacity_K && !(*capacity_K > 0.0)) throw ConfigError("synonym: capacity_K must be positive");
  optimizer.validate();
}

SynonymReport run_synonym_experiment(const SynonymConfig& cfg) {
  cfg.validate();
  const auto data = gen_synonym_stress(cfg.n_pairs, cfg.max_delta, cfg.seed);
  ScoringModel model = ScoringModel::tabular(data);
  model.set_capacity(cfg.capacity_K);
  const SurrogateLoss loss = SurrogateLoss::logistic(cfg.beta);
  const std::vector<MarginSpec> specs{MarginSpec::uniform(cfg.gamma_fixed),
                                      MarginSpec::structure_aware(cfg.tau)};
  auto traces = parallel_map<TrainTrace>(2, [&](std::size_t i) {
    return train(model, data, loss, specs[i], cfg.optimizer);
  });
  SynonymReport r;
  r.fixed = std::move(traces[0]);
  r.structure_aware = std::move(traces[1]);
  r.fixed_final_loss = r.fixed.last().surrogate_risk;
  r.sa_final_loss = r.structure_aware.last().surrogate_risk;
  r.sa_below_fixed = r.sa_final_loss < r.fixed_final_loss;
  return r;
}

nlohmann::json summary_json(const SynonymReport& r) {
  return {{"experiment", "synonym"},
          {"fixed_final_loss", r.fixed_final_loss},
          {"sa_final_loss", r.sa_final_loss},
          {"sa_final_loss_lt_fixed_final_loss", r.sa_below_fixed},
          {"fixed", trace_summary(r.fixed)},
          {"structure_aware", trace_summary(r.structure_aware)}};
}

void CapacityConfig::validate() const {
  if (!capacity_K) throw ConfigError("capacity experiment: capacity_K must be set");
  if (!(*capacity_K > 0.0)) throw ConfigError("capacity experiment: capacity_K must be positive");
  if (contexts < 1 || responses_per_context < 2) {
    throw ConfigError("capacity experiment: need contexts >= 1 and responses_per_context >= 2");
  }
  if (!(reward_scale >= 0.0)) throw ConfigError("capacity experiment: reward_scale must be >= 0");
  MarginSpec::uniform(gamma).validate();
  optimizer.validate();
}

CapacityReport run_capacity_experiment(const CapacityConfig& cfg) {
  cfg.validate();
  const auto data =
      gen_bradley_terry(cfg.contexts, cfg.responses_per_context, cfg.reward_scale, cfg.seed);
  ScoringModel model = ScoringModel::tabular(data.dataset);
  model.set_capacity(cfg.capacity_K);
  const std::vector<SurrogateLoss> losses{SurrogateLoss::logistic(1.0),
                                          SurrogateLoss::poly_hinge(2),
                                          SurrogateLoss::poly_hinge(3)};
  const MarginSpec spec = MarginSpec::uniform(cfg.gamma);
  const double threshold = std::min(cfg.gamma, *cfg.capacity_K - 1e-6);
  auto runs = parallel_map<CapacityRun>(losses.size(), [&](std::size_t i) {
    CapacityRun run;
    run.loss = losses[i];
    run.trace = train(model, data.dataset, losses[i], spec, cfg.optimizer);
    const auto dh = margins(run.trace.final_model, data.dataset);
    run.accuracy = pairwise_accuracy(data.dataset, dh);
    CompensatedSum met, total;
    const auto& ex = data.dataset.examples();
    for (std::size_t k = 0; k < ex.size(); ++k) {
      if (ex[k].eta == 0.5) continue;
      total += ex[k].mass;
      if ((ex[k].eta > 0.5 ? dh[k] : -dh[k]) >= threshold) met += ex[k].mass;
    }
    run.margin_satisfaction = total.value() > 0.0 ? met.value() / total.value() : 0.0;
    return run;
  });
  CapacityReport r;
  r.runs = std::move(runs);
  r.ordered = r.runs[2].accuracy >= r.runs[1].accuracy && r.runs[1].accuracy >= r.runs[0].accuracy;
  return r;
}

nlohmann::json summary_json(const CapacityReport& r) {
  nlohmann::json runs = nlohmann::json::array();
  nlohmann::json triple = nlohmann::json::array();
  for (const auto& run : r.runs) {
    nlohmann::json j = trace_summary(run.trace);
    j["loss"] = run.loss.label();
    j["accuracy"] = run.accuracy;
    j["margin_satisfaction"] = run.margin_satisfaction;
    runs.push_back(std::move(j));
    triple.push_back(run.accuracy);
  }
  return {{"experiment", "capacity"},
          {"accuracy_logistic_poly2_poly3", triple},
          {"accuracy_ordered", r.ordered},
          {"runs", runs}};
}

ProfileConfig ProfileConfig::defaults() {
  ProfileConfig cfg;
  for (int i = 1; i <= 20; ++i) cfg.gammas.push_back(0.5 * i);
  cfg.gammas.push_back(20.0);
  cfg.gammas.push_back(40.0);
  cfg.losses = {SurrogateLoss::logistic(1.0), SurrogateLoss::poly_hinge(1),
                SurrogateLoss::poly_hinge(2), SurrogateLoss::poly_hinge(3),
                SurrogateLoss::gce(0.7),      SurrogateLoss::mae()};
  return cfg;
}

void ProfileConfig::validate() const {
  if (gammas.empty()) throw ConfigError("profile: empty gamma grid");
  for (double g : gammas) {
    if (!(g >= 0.0) || !std::isfinite(g)) throw ConfigError("profile: gammas must be finite and >= 0");
  }
  if (!(capacity_K >= 0.0) || !std::isfinite(capacity_K)) {
    throw ConfigError("profile: K must be finite and >= 0");
  }
  if (losses.empty()) throw ConfigError("profile: no losses");
  for (const auto& l : losses) {
    l.validate();
    if (!l.is_monotone()) throw ConfigError("profile: " + l.label() + " is not non-increasing");
  }
  for (double e : epsilons) {
    if (!(e > 0.0)) throw ConfigError("profile: epsilons must be positive");
  }
}

ProfileReport run_profile_sweep(const ProfileConfig& cfg) {
  cfg.validate();
  std::vector<double> gammas = cfg.gammas;
  std::sort(gammas.begin(), gammas.end());
  ProfileReport r;
  for (const auto& loss : cfg.losses) {
    for (double g : gammas) {
      ProfileRow row{loss, g, cfg.capacity_K, std::nullopt, ""};
      try {
        row.rho = margin_capacity_profile(loss, g, cfg.capacity_K);
      } catch (const DegenerateError&) {
        row.note = "skipped: Phi(-gamma) is zero";
        r.warnings.push_back(loss.label() + " at gamma=" + format_number(g) + ": " + row.note);
      }
      r.rows.push_back(std::move(row));
    }
  }
  std::set<double> betas;
  for (const auto& l : cfg.losses) {
    if (l.family == LossFamily::logistic) betas.insert(l.beta);
  }
  if (cfg.capacity_K > 0.0) {
    for (double beta : betas) {
      for (double eps : cfg.epsilons) {
        const double g = optimal_margin_logistic(beta, cfg.capacity_K, eps);
        r.optimal_margins.push_back({beta, cfg.capacity_K, eps, g, g < 0.0});
      }
    }
  }
  return r;
}

std::string profile_csv(const ProfileReport& r) {
  std::string out = "family,param,gamma,K,rho,note\n";
  for (const auto& row : r.rows) {
    out += std::string(to_string(row.loss.family)) + "," + param_text(row.loss) + "," +
           format_number(row.gamma) + "," + format_number(row.capacity_K) + "," +
           (row.rho ? format_number(*row.rho) : std::string()) + "," + row.note + "\n";
  }
  return out;
}

namespace {

struct WideTable {
  std::vector<std::string> columns;
  std::vector<double> gammas;
  double capacity_K = 0.0;
  // values[c][g]
  std::vector<std::vector<std::optional<double>>> values;
};

WideTable widen(const ProfileReport& r) {
  WideTable t;
  std::vector<SurrogateLoss> order;
  for (const auto& row : r.rows) {
    if (std::find(order.begin(), order.end(), row.loss) == order.end()) order.push_back(row.loss);
    if (std::find(t.gammas.begin(), t.gammas.end(), row.gamma) == t.gammas.end()) {
      t.gammas.push_back(row.gamma);
    }
    t.capacity_K = row.capacity_K;
  }
  std::sort(t.gammas.begin(), t.gammas.end());
  std::set<std::string> seen;
  for (const auto& l : order) {
    std::string name = column_name(l);
    if (!seen.insert(name).second) name = l.label();
    t.columns.push_back(name);
  }
  t.values.assign(order.size(), std::vector<std::optional<double>>(t.gammas.size()));
  for (const auto& row : r.rows) {
    const auto c = std::find(order.begin(), order.end(), row.loss) - order.begin();
    const auto g = std::find(t.gammas.begin(), t.gammas.end(), row.gamma) - t.gammas.begin();
    t.values[c][g] = row.rho;
  }
  return t;
}

}  // namespace

std::string profile_wide_csv(const ProfileReport& r) {
  const WideTable t = widen(r);
  std::string out = "gamma,K";
  for (const auto& c : t.columns) out += "," + c;
  out += "\n";
  for (std::size_t g = 0; g < t.gammas.size(); ++g) {
    out += format_number(t.gammas[g]) + "," + format_number(t.capacity_K);
    for (std::size_t c = 0; c < t.columns.size(); ++c) {
      out += ",";
      if (t.values[c][g]) out += format_number(*t.values[c][g]);
    }
    out += "\n";
  }
  return out;
}

std::string profile_svg(const ProfileReport& r) {
  const WideTable t = widen(r);
  constexpr double kWidth = 720, kHeight = 440;
  constexpr double kLeft = 60, kRight = 150, kTop = 30, kBottom = 50;
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  const double gmin = t.gammas.empty() ? 0.0 : t.gammas.front();
  double gmax = t.gammas.empty() ? 1.0 : t.gammas.back();
  if (gmax <= gmin) gmax = gmin + 1.0;
  double ymax = 1.0;
  for (const auto& col : t.values) {
    for (const auto& v : col) {
      if (v) ymax = std::max(ymax, *v);
    }
  }
  auto px = [&](double g) { return kLeft + (g - gmin) / (gmax - gmin) * plot_w; };
  auto py = [&](double v) { return kTop + (1.0 - v / ymax) * plot_h; };
  auto num = [](double v) {
    std::ostringstream s;
    s.setf(std::ios::fixed);
    s.precision(2);
    s << v;
    return s.str();
  };
  static const char* kColors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                  "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
      << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << kLeft + plot_w / 2 << "\" y=\"20\" text-anchor=\"middle\" "
      << "font-family=\"sans-serif\" font-size=\"14\">margin-capacity profile (K="
      << format_number(t.capacity_K) << ")</text>\n"
      << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + plot_h << "\" x2=\"" << kLeft + plot_w
      << "\" y2=\"" << kTop + plot_h << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\""
      << kTop + plot_h << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double g = gmin + (gmax - gmin) * i / 5.0;
    const double v = ymax * i / 5.0;
    svg << "<text x=\"" << num(px(g)) << "\" y=\"" << kTop + plot_h + 18
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << num(g)
        << "</text>\n"
        << "<text x=\"" << kLeft - 6 << "\" y=\"" << num(py(v) + 4)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << num(v)
        << "</text>\n";
  }
  svg << "<text x=\"" << kLeft + plot_w / 2 << "\" y=\"" << kHeight - 10
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">gamma</text>\n"
      << "<text x=\"16\" y=\"" << kTop + plot_h / 2 << "\" text-anchor=\"middle\" "
      << "font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 16 "
      << kTop + plot_h / 2 << ")\">rho</text>\n";
  for (std::size_t c = 0; c < t.columns.size(); ++c) {
    const char* color = kColors[c % (sizeof(kColors) / sizeof(kColors[0]))];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    bool first = true;
    for (std::size_t g = 0; g < t.gammas.size(); ++g) {
      if (!t.values[c][g]) continue;
      if (!first) svg << " ";
      svg << num(px(t.gammas[g])) << "," << num(py(*t.values[c][g]));
      first = false;
    }
    svg << "\"/>\n";
    const double ly = kTop + 14.0 + 18.0 * static_cast<double>(c);
    svg << "<line x1=\"" << kLeft + plot_w + 12 << "\" y1=\"" << ly - 4 << "\" x2=\""
        << kLeft + plot_w + 32 << "\" y2=\"" << ly - 4 << "\" stroke=\"" << color
        << "\" stroke-width=\"1.5\"/>\n"
        << "<text x=\"" << kLeft + plot_w + 38 << "\" y=\"" << ly
        << "\" font-family=\"sans-serif\" font-size=\"11\">" << t.columns[c] << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

nlohmann::json summary_json(const ProfileReport& r) {
  nlohmann::json margins = nlohmann::json::array();
  for (const auto& m : r.optimal_margins) {
    nlohmann::json j = {{"beta", m.beta},
                        {"K", m.capacity_K},
                        {"epsilon", m.epsilon},
                        {"gamma_star", m.gamma_star}};
    if (m.capacity_dominates) j["note"] = "margin below zero: capacity dominates";
    margins.push_back(std::move(j));
  }
  return {{"experiment", "profile"},
          {"rows", r.rows.size()},
          {"optimal_margin_logistic", margins},
          {"warnings", r.warnings}};
}

SplitAccuracy evaluate_ambiguity_splits(const ScoringModel& model,
                                        const PreferenceDataset& dataset,
                                        double ambiguous_fraction, double hard_fraction) {
  if (!(ambiguous_fraction > 0.0 && ambiguous_fraction < 1.0) ||
      !(hard_fraction > 0.0 && hard_fraction <= 1.0)) {
    throw ConfigError("split fractions must lie in (0, 1)");
  }
  if (dataset.empty()) throw DomainError("evaluate_ambiguity_splits: empty dataset");
  const auto& ex = dataset.examples();
  const auto dh = margins(model, dataset);
  std::vector<std::size_t> order(ex.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return ex[a].delta < ex[b].delta; });
  auto count_of = [&](double frac) {
    const auto n = static_cast<std::size_t>(std::ceil(frac * static_cast<double>(ex.size())));
    return std::clamp<std::size_t>(n, 1, ex.size());
  };
  const std::size_t n_amb = count_of(ambiguous_fraction);
  const std::size_t n_hard = count_of(hard_fraction);
  auto accuracy = [&](std::size_t from, std::size_t to) {
    CompensatedSum correct, total;
    for (std::size_t k = from; k < to; ++k) {
      const auto i = order[k];
      if (ex[i].eta == 0.5) continue;
      total += ex[i].mass;
      if (ex[i].eta > 0.5 ? dh[i] > 0.0 : dh[i] < 0.0) correct += ex[i].mass;
    }
    return total.value() > 0.0 ? correct.value() / total.value()
                               : std::numeric_limits<double>::quiet_NaN();
  };
  SplitAccuracy s;
  s.ambiguous = accuracy(0, n_amb);
  s.distinct = accuracy(n_amb, ex.size());
  s.hard = accuracy(0, n_hard);
  s.delta_threshold = ex[order[n_amb - 1]].delta;
  s.hard_threshold = ex[order[n_hard - 1]].delta;
  return s;
}

namespace {

SurrogateLoss random_loss(Rng& rng, bool convex_only) {
  const int pick = static_cast<int>(rng.below(convex_only ? 3 : 5));
  switch (pick) {
    case 0: return SurrogateLoss::logistic(rng.uniform(0.2, 5.0));
    case 1: return SurrogateLoss::exponential(rng.uniform(0.2, 1.5));
    case 2: return SurrogateLoss::poly_hinge(1 + static_cast<int>(rng.below(3)));
    case 3: return SurrogateLoss::gce(rng.uniform(0.1, 1.0));
    default: return SurrogateLoss::mae();
  }
}

double random_eta(Rng& rng) {
  switch (rng.below(5)) {
    case 0: return 0.0;
    case 1: return 1.0;
    case 2: return 0.5;
    default: return rng.uniform();
  }
}

// One pair per context, so every pair's score difference is free.
PreferenceDataset random_disjoint_dataset(Rng& rng) {
  const int n = 1 + static_cast<int>(rng.below(6));
  std::vector<PreferenceExample> ex;
  for (int i = 0; i < n; ++i) {
    const std::string id = std::to_string(i);
    ex.push_back({"c" + id, "a" + id, "b" + id, random_eta(rng), rng.uniform(0.1, 1.0),
                  rng.uniform()});
  }
  return PreferenceDataset::from_examples(std::move(ex), true);
}

PreferenceDataset random_dataset(Rng& rng) {
  if (rng.below(2) == 0) return random_disjoint_dataset(rng);
  const int contexts = 1 + static_cast<int>(rng.below(3));
  const int responses = 2 + static_cast<int>(rng.below(3));
  return gen_bradley_terry(contexts, responses, rng.uniform(0.0, 3.0), rng.next()).dataset;
}

std::string describe(const SurrogateLoss& loss, const MarginSpec& spec, const ModelClass& cls,
                     std::size_t pairs) {
  std::string s = loss.label() + " " + std::string(to_string(spec.kind));
  if (spec.kind == MarginKind::uniform) s += "(gamma=" + format_number(spec.gamma) + ")";
  if (spec.kind == MarginKind::structure_aware) {
    s += "(tau=" + format_number(spec.tau) + (spec.inverse_weighting ? ",weighted" : "") + ")";
  }
  s += " " + std::string(to_string(cls.kind)) + "(" + format_number(cls.bound);
  if (cls.kind == ModelClassKind::quantized) s += ",gamma=" + format_number(cls.gamma);
  s += ") pairs=" + std::to_string(pairs);
  return s;
}

FuzzCase fuzz_case(BoundKind kind, std::size_t index, std::uint64_t seed,
                   const VerifyOptions& options) {
  Rng rng(seed ^ (0x9E3779B97F4A7C15ULL * (index + 1)));
  FuzzCase out;
  out.index = index;
  if (kind == BoundKind::hard_margin) {
    const auto data = random_disjoint_dataset(rng);
    const double gamma = rng.uniform(0.1, 2.0);
    const SurrogateLoss loss = random_loss(rng, true);
    ScoringModel model = ScoringModel::tabular(data);
    model.set_quantize_gamma(gamma);
    for (const auto& e : data.examples()) {
      const long long a = static_cast<long long>(rng.below(11)) - 5;
      long long b = static_cast<long long>(rng.below(11)) - 5;
      if (b == a) b = a + (rng.below(2) == 0 ? 1 : -1);
      model.set_raw(e.x, e.y, static_cast<double>(a) * gamma);
      model.set_raw(e.x, e.y_prime, static_cast<double>(b) * gamma);
    }
    const ModelClass cls = ModelClass::quantized(gamma);
    const MarginSpec spec = MarginSpec::none();
    out.description = describe(loss, spec, cls, data.size());
    out.check = verify_bound(model, data, loss, spec, cls, options);
    return out;
  }

  const auto data = random_dataset(rng);
  const SurrogateLoss loss = random_loss(rng, false);
  MarginSpec spec;
  if (kind == BoundKind::gamma_shifted) {
    spec = rng.below(5) == 0 ? MarginSpec::none() : MarginSpec::uniform(rng.uniform(0.0, 3.0));
  } else {
    spec = MarginSpec::structure_aware(rng.uniform(0.1, 5.0), rng.below(2) == 0);
  }
  ModelClass cls = ModelClass::tabular_free();
  std::optional<double> capacity;
  if (rng.below(2) == 0) {
    capacity = rng.uniform(0.2, 4.0);
    cls = ModelClass::tabular_capacity(*capacity);
  }
  ScoringModel model =
      rng.below(4) == 0 ? ScoringModel::global(data) : ScoringModel::tabular(data);
  const double spread = rng.uniform(0.0, 4.0);
  for (auto& p : model.params()) p = rng.below(10) == 0 ? 0.0 : rng.uniform(-spread, spread);
  model.set_capacity(capacity);
  out.description = describe(loss, spec, cls, data.size());
  out.check = verify_bound(model, data, loss, spec, cls, options);
  return out;
}

}  // namespace

std::vector<FuzzCase> run_bound_fuzz(BoundKind kind, int cases, std::uint64_t seed,
                                     const VerifyOptions& options) {
  if (cases < 1) throw ConfigError("fuzz: cases must be >= 1");
  return parallel_map<FuzzCase>(static_cast<std::size_t>(cases), [&](std::size_t i) {
    return fuzz_case(kind, i, seed, options);
  });
}

}  // namespace sarank

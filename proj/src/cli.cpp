#include "sarank/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "sarank/distance.hpp"
#include "sarank/error.hpp"
#include "sarank/experiments.hpp"
#include "sarank/generators.hpp"
#include "sarank/json_util.hpp"
#include "sarank/numeric.hpp"
#include "sarank/preference_data.hpp"
#include "sarank/risk_engine.hpp"
#include "sarank/scoring_model.hpp"
#include "sarank/trainer.hpp"

namespace sarank {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

// A check ran to completion and its assertion did not hold.
class VerificationFailed : public Error {
 public:
  using Error::Error;
};

struct Options {
  std::string command;
  std::string config_path;
  std::optional<std::string> out;
  std::optional<long long> seed;
  bool svg = false;
  bool halve_coefficient = false;
  std::vector<std::string> overrides;
};

struct Io {
  std::ostream& out;
  std::ostream& err;
};

// ---------------------------------------------------------------- files

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::error_code ec;
  fs::create_directories(path.parent_path(), ec);
  if (ec) throw IoError("cannot create directory " + path.parent_path().string());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  out.flush();
  if (!out) throw IoError("failed writing " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

// Paths given in a config must exist before we touch them; a missing key is
// a config error, a missing file an IO error.
fs::path input_path(const json& cfg, std::string_view key, std::string_view ctx) {
  const auto& v = json_util::require(cfg, key, ctx);
  if (!v.is_string() || v.get<std::string>().empty()) {
    throw ConfigError(std::string(ctx) + ": \"" + std::string(key) + "\" must be a path string");
  }
  return fs::path(v.get<std::string>());
}

// ---------------------------------------------------------------- config

json load_config(const Options& opts) {
  json cfg;
  const std::string text = read_text(opts.config_path);
  try {
    cfg = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + opts.config_path + ": malformed JSON: " + e.what());
  }
  if (!cfg.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& kv : opts.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("--set expects key=value, got \"" + kv + "\"");
    }
    const std::string key = kv.substr(0, eq);
    const std::string raw = kv.substr(eq + 1);
    json value;
    try {
      value = json::parse(raw);
    } catch (const json::parse_error&) {
      value = raw;
    }
    json* node = &cfg;
    std::size_t start = 0;
    while (true) {
      const auto dot = key.find('.', start);
      const std::string part = key.substr(start, dot == std::string::npos ? dot : dot - start);
      if (part.empty()) throw ConfigError("--set: empty key segment in \"" + key + "\"");
      if (dot == std::string::npos) {
        (*node)[part] = value;
        break;
      }
      json& child = (*node)[part];
      if (child.is_null()) child = json::object();
      if (!child.is_object()) throw ConfigError("--set: \"" + part + "\" is not an object");
      node = &child;
      start = dot + 1;
    }
  }
  if (opts.seed) cfg["seed"] = *opts.seed;
  if (opts.out) cfg["out"] = *opts.out;
  return cfg;
}

std::vector<std::string_view> with_common(std::vector<std::string_view> keys) {
  keys.push_back("seed");
  keys.push_back("out");
  return keys;
}

void reject_unknown(const json& cfg, const std::vector<std::string_view>& allowed,
                    const std::string& ctx) {
  for (const auto& item : cfg.items()) {
    if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end()) {
      throw SchemaError(ctx + ": unknown field \"" + item.key() + "\"");
    }
  }
}

fs::path output_dir(const json& cfg) {
  auto it = cfg.find("out");
  if (it == cfg.end() || !it->is_string() || it->get<std::string>().empty()) {
    throw ConfigError("no output directory: pass --out or set \"out\" in the config");
  }
  return fs::path(it->get<std::string>());
}

std::uint64_t seed_of(const json& cfg) {
  const long long s = json_util::integer_or(cfg, "seed", 0, "config");
  if (s < 0) throw ConfigError("seed must be >= 0");
  return static_cast<std::uint64_t>(s);
}

int int_field(const json& cfg, std::string_view key, int fallback, std::string_view ctx) {
  const long long v = json_util::integer_or(cfg, key, fallback, ctx);
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
    throw ConfigError(std::string(ctx) + ": \"" + std::string(key) + "\" is out of range");
  }
  return static_cast<int>(v);
}

std::vector<double> number_list(const json& cfg, std::string_view key,
                                std::vector<double> fallback, std::string_view ctx) {
  auto it = cfg.find(key);
  if (it == cfg.end()) return fallback;
  if (!it->is_array()) {
    throw SchemaError(std::string(ctx) + ": \"" + std::string(key) + "\" must be an array");
  }
  std::vector<double> out;
  for (const auto& v : *it) out.push_back(json_util::number(v, key, ctx));
  return out;
}

SurrogateLoss loss_field(const json& cfg, std::string_view key, SurrogateLoss fallback) {
  auto it = cfg.find(key);
  if (it == cfg.end()) return fallback;
  return it->get<SurrogateLoss>();
}

std::vector<SurrogateLoss> loss_list(const json& cfg, std::string_view key,
                                     std::vector<SurrogateLoss> fallback) {
  auto it = cfg.find(key);
  if (it == cfg.end()) return fallback;
  if (!it->is_array()) throw SchemaError("config: \"" + std::string(key) + "\" must be an array");
  std::vector<SurrogateLoss> out;
  for (const auto& v : *it) out.push_back(v.get<SurrogateLoss>());
  return out;
}

MarginSpec margin_field(const json& cfg, std::string_view key, MarginSpec fallback) {
  auto it = cfg.find(key);
  if (it == cfg.end()) return fallback;
  return it->get<MarginSpec>();
}

OptimizerConfig optimizer_field(const json& cfg, OptimizerConfig fallback) {
  auto it = cfg.find("optimizer");
  if (it != cfg.end()) from_json(*it, fallback);
  fallback.validate();
  return fallback;
}

std::optional<double> optional_number(const json& cfg, std::string_view key,
                                      std::optional<double> fallback, std::string_view ctx) {
  auto it = cfg.find(key);
  if (it == cfg.end()) return fallback;
  if (it->is_null()) return std::nullopt;
  return json_util::number(*it, key, ctx);
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::vector<std::uint64_t> seed_list(const json& cfg) {
  auto it = cfg.find("seeds");
  if (it == cfg.end()) return {seed_of(cfg)};
  if (!it->is_array() || it->empty()) throw ConfigError("\"seeds\" must be a nonempty array");
  std::vector<std::uint64_t> seeds;
  for (const auto& v : *it) {
    if (!v.is_number_integer() || v.get<long long>() < 0) {
      throw ConfigError("\"seeds\" entries must be integers >= 0");
    }
    seeds.push_back(v.get<std::uint64_t>());
  }
  return seeds;
}

std::string csv_row(std::initializer_list<std::string> cells) {
  std::string line;
  bool first = true;
  for (const auto& c : cells) {
    if (!first) line += ",";
    line += c;
    first = false;
  }
  return line + "\n";
}

std::string num(double v) { return format_number(v); }

// ---------------------------------------------------------------- generate

DistanceSource distance_source(const json& j) {
  json_util::reject_unknown(j, {"kind", "value", "path"}, "distance");
  const std::string kind = json_util::string_or(j, "kind", "", "distance");
  if (kind == "edit") return EditDistanceSource{};
  if (kind == "constant") {
    const double c = json_util::number(json_util::require(j, "value", "distance"), "value", "distance");
    if (!(c >= 0.0) || !std::isfinite(c)) throw ConfigError("distance: constant must be >= 0");
    return ConstantDistanceSource{c};
  }
  if (kind == "embeddings") {
    return EmbeddingDistanceSource{load_embeddings_jsonl(input_path(j, "path", "distance"))};
  }
  throw ConfigError("distance: kind must be edit, constant or embeddings");
}

int cmd_generate(json cfg, const Options&, Io& io) {
  const std::string generator = json_util::string_or(cfg, "generator", "", "config");
  const std::uint64_t seed = seed_of(cfg);
  json resolved = {{"generator", generator}, {"seed", seed}};
  PreferenceDataset dataset;
  std::optional<LatentRewards> latents;
  std::vector<std::string_view> allowed{"generator", "distance"};

  if (generator == "bt" || generator == "generalized_bt") {
    allowed.insert(allowed.end(), {"contexts", "responses_per_context", "reward_scale"});
    if (generator == "generalized_bt") allowed.push_back("loss");
    reject_unknown(cfg, with_common(allowed), "generate");
    const int contexts = int_field(cfg, "contexts", 3, "generate");
    const int k = int_field(cfg, "responses_per_context", 4, "generate");
    const double scale = json_util::number_or(cfg, "reward_scale", 1.0, "generate");
    resolved["contexts"] = contexts;
    resolved["responses_per_context"] = k;
    resolved["reward_scale"] = scale;
    LatentDataset data;
    if (generator == "bt") {
      data = gen_bradley_terry(contexts, k, scale, seed);
    } else {
      const SurrogateLoss loss = loss_field(cfg, "loss", SurrogateLoss::logistic());
      resolved["loss"] = loss;
      data = gen_generalized_bt(loss, contexts, k, scale, seed);
    }
    dataset = std::move(data.dataset);
    latents = std::move(data.rewards);
  } else if (generator == "synonym") {
    allowed.insert(allowed.end(), {"n_pairs", "max_delta"});
    reject_unknown(cfg, with_common(allowed), "generate");
    const int n = int_field(cfg, "n_pairs", 100, "generate");
    const double max_delta = json_util::number_or(cfg, "max_delta", 0.1, "generate");
    resolved["n_pairs"] = n;
    resolved["max_delta"] = max_delta;
    dataset = gen_synonym_stress(n, max_delta, seed);
  } else if (generator == "negative") {
    allowed.push_back("epsilons");
    reject_unknown(cfg, with_common(allowed), "generate");
    const auto eps = number_list(cfg, "epsilons", {1e-1, 1e-2, 1e-3, 1e-4, 1e-5}, "generate");
    resolved["epsilons"] = eps;
    dataset = gen_negative_construction(eps).dataset;
  } else {
    throw ConfigError("unknown generator \"" + generator +
                      "\" (expected bt, generalized_bt, synonym or negative)");
  }
  if (auto it = cfg.find("distance"); it != cfg.end()) {
    dataset = attach_distances(dataset, distance_source(*it));
    resolved["distance"] = *it;
  }

  const fs::path out = output_dir(cfg);
  resolved["out"] = out.string();
  write_json(out / "config.json", resolved);
  write_text(out / "dataset.jsonl", serialize_jsonl(dataset));
  json files = json::array({"dataset.jsonl"});
  if (latents) {
    save_latents_jsonl(*latents, out / "latents.jsonl");
    files.push_back("latents.jsonl");
  }
  json params = resolved;
  params.erase("out");
  params.erase("generator");
  params.erase("seed");
  write_json(out / "manifest.json", {{"generator", generator},
                                     {"params", params},
                                     {"seed", seed},
                                     {"examples", dataset.size()},
                                     {"files", files}});
  io.out << "wrote " << dataset.size() << " examples to " << (out / "dataset.jsonl").string()
         << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- train

int train_synonym(const json& cfg, Io& io) {
  reject_unknown(cfg,
                 with_common({"experiment", "seeds", "n_pairs", "max_delta", "gamma_fixed", "tau",
                              "beta", "capacity_K", "optimizer"}),
                 "train");
  SynonymConfig base;
  base.n_pairs = int_field(cfg, "n_pairs", base.n_pairs, "train");
  base.max_delta = json_util::number_or(cfg, "max_delta", base.max_delta, "train");
  base.gamma_fixed = json_util::number_or(cfg, "gamma_fixed", base.gamma_fixed, "train");
  base.tau = json_util::number_or(cfg, "tau", base.tau, "train");
  base.beta = json_util::number_or(cfg, "beta", base.beta, "train");
  base.capacity_K = optional_number(cfg, "capacity_K", base.capacity_K, "train");
  base.optimizer = optimizer_field(cfg, base.optimizer);
  base.validate();
  const auto seeds = seed_list(cfg);
  const fs::path out = output_dir(cfg);

  json resolved = {{"experiment", "synonym"},     {"seeds", seeds},
                   {"n_pairs", base.n_pairs},     {"max_delta", base.max_delta},
                   {"gamma_fixed", base.gamma_fixed}, {"tau", base.tau},
                   {"beta", base.beta},           {"capacity_K", optional_json(base.capacity_K)},
                   {"optimizer", base.optimizer}, {"out", out.string()}};
  write_json(out / "config.json", resolved);

  json runs = json::array();
  bool all_below = true;
  for (auto seed : seeds) {
    SynonymConfig c = base;
    c.seed = seed;
    c.optimizer.seed = seed;
    const auto report = run_synonym_experiment(c);
    const std::string sub = "seed_" + std::to_string(seed);
    write_text(out / "traces" / sub / "fixed.csv", trace_csv(report.fixed));
    write_text(out / "traces" / sub / "structure_aware.csv", trace_csv(report.structure_aware));
    write_json(out / "reports" / sub / "fixed_model.json", report.fixed.final_model.to_json());
    write_json(out / "reports" / sub / "structure_aware_model.json",
               report.structure_aware.final_model.to_json());
    json s = summary_json(report);
    s["seed"] = seed;
    runs.push_back(std::move(s));
    all_below = all_below && report.sa_below_fixed;
    io.out << "seed " << seed << ": fixed " << num(report.fixed_final_loss) << ", structure-aware "
           << num(report.sa_final_loss) << "\n";
  }
  write_json(out / "reports" / "summary.json", {{"experiment", "synonym"},
                                               {"seeds", seeds},
                                               {"sa_final_loss_lt_fixed_final_loss", all_below},
                                               {"runs", runs}});
  if (!all_below) {
    throw VerificationFailed("structure-aware final loss is not below the fixed-margin loss");
  }
  return kExitOk;
}

int train_capacity(const json& cfg, Io& io) {
  reject_unknown(cfg,
                 with_common({"experiment", "seeds", "contexts", "responses_per_context",
                              "reward_scale", "capacity_K", "gamma", "optimizer"}),
                 "train");
  CapacityConfig base;
  base.contexts = int_field(cfg, "contexts", base.contexts, "train");
  base.responses_per_context =
      int_field(cfg, "responses_per_context", base.responses_per_context, "train");
  base.reward_scale = json_util::number_or(cfg, "reward_scale", base.reward_scale, "train");
  base.capacity_K = optional_number(cfg, "capacity_K", base.capacity_K, "train");
  base.gamma = json_util::number_or(cfg, "gamma", base.gamma, "train");
  base.optimizer = optimizer_field(cfg, base.optimizer);
  base.validate();
  const auto seeds = seed_list(cfg);
  const fs::path out = output_dir(cfg);

  json resolved = {{"experiment", "capacity"},
                   {"seeds", seeds},
                   {"contexts", base.contexts},
                   {"responses_per_context", base.responses_per_context},
                   {"reward_scale", base.reward_scale},
                   {"capacity_K", optional_json(base.capacity_K)},
                   {"gamma", base.gamma},
                   {"optimizer", base.optimizer},
                   {"out", out.string()}};
  write_json(out / "config.json", resolved);

  static const char* kNames[] = {"logistic", "poly2", "poly3"};
  json runs = json::array();
  bool all_ordered = true;
  for (auto seed : seeds) {
    CapacityConfig c = base;
    c.seed = seed;
    c.optimizer.seed = seed;
    const auto report = run_capacity_experiment(c);
    const std::string sub = "seed_" + std::to_string(seed);
    for (std::size_t i = 0; i < report.runs.size(); ++i) {
      write_text(out / "traces" / sub / (std::string(kNames[i]) + ".csv"),
                 trace_csv(report.runs[i].trace));
      write_json(out / "reports" / sub / (std::string(kNames[i]) + "_model.json"),
                 report.runs[i].trace.final_model.to_json());
    }
    json s = summary_json(report);
    s["seed"] = seed;
    runs.push_back(std::move(s));
    all_ordered = all_ordered && report.ordered;
    io.out << "seed " << seed << ": accuracy logistic " << num(report.runs[0].accuracy)
           << ", poly2 " << num(report.runs[1].accuracy) << ", poly3 "
           << num(report.runs[2].accuracy) << "\n";
  }
  write_json(out / "reports" / "summary.json", {{"experiment", "capacity"},
                                               {"seeds", seeds},
                                               {"accuracy_ordered", all_ordered},
                                               {"runs", runs}});
  if (!all_ordered) {
    throw VerificationFailed("accuracy is not ordered poly3 >= poly2 >= logistic");
  }
  return kExitOk;
}

int train_custom(const json& cfg, Io& io) {
  reject_unknown(cfg,
                 with_common({"experiment", "dataset", "model", "loss", "margin", "optimizer",
                              "splits"}),
                 "train");
  const fs::path dataset_path = input_path(cfg, "dataset", "train");
  const std::uint64_t seed = seed_of(cfg);
  const SurrogateLoss loss = loss_field(cfg, "loss", SurrogateLoss::logistic());
  const MarginSpec spec = margin_field(cfg, "margin", MarginSpec::none());
  OptimizerConfig opt = optimizer_field(cfg, OptimizerConfig{});
  opt.seed = seed;
  loss.validate();
  spec.validate();

  const json model_cfg = cfg.value("model", json::object());
  json_util::reject_unknown(model_cfg, {"kind", "capacity_K", "features", "init"}, "model");
  const ModelKind kind =
      model_kind_from_string(json_util::string_or(model_cfg, "kind", "tabular", "model"));
  const auto capacity = optional_number(model_cfg, "capacity_K", std::nullopt, "model");

  std::vector<std::string> warnings;
  const auto dataset = load_jsonl(dataset_path, &warnings).normalized_copy();
  for (const auto& w : warnings) io.err << "warning: " << w << "\n";

  std::shared_ptr<const FeatureMap> features;
  if (kind == ModelKind::linear) {
    features = std::make_shared<FeatureMap>(
        load_features_jsonl(input_path(model_cfg, "features", "model")));
  }
  ScoringModel model;
  if (model_cfg.contains("init")) {
    model = ScoringModel::from_json(
        json::parse(read_text(input_path(model_cfg, "init", "model"))), features);
  } else if (kind == ModelKind::tabular) {
    model = ScoringModel::tabular(dataset);
  } else if (kind == ModelKind::global) {
    model = ScoringModel::global(dataset);
  } else {
    model = ScoringModel::linear(features, seed);
  }
  if (capacity) model.set_capacity(capacity);

  json splits_cfg;
  double ambiguous_fraction = 0.5, hard_fraction = 0.2;
  if (auto it = cfg.find("splits"); it != cfg.end()) {
    json_util::reject_unknown(*it, {"ambiguous_fraction", "hard_fraction"}, "splits");
    ambiguous_fraction = json_util::number_or(*it, "ambiguous_fraction", 0.5, "splits");
    hard_fraction = json_util::number_or(*it, "hard_fraction", 0.2, "splits");
    splits_cfg = {{"ambiguous_fraction", ambiguous_fraction}, {"hard_fraction", hard_fraction}};
  }

  const fs::path out = output_dir(cfg);
  json resolved = {{"experiment", "custom"},
                   {"dataset", dataset_path.string()},
                   {"seed", seed},
                   {"loss", loss},
                   {"margin", spec},
                   {"optimizer", opt},
                   {"model", model_cfg},
                   {"out", out.string()}};
  if (!splits_cfg.is_null()) resolved["splits"] = splits_cfg;
  write_json(out / "config.json", resolved);

  const auto trace = train(model, dataset, loss, spec, opt);
  write_text(out / "traces" / "train.csv", trace_csv(trace));
  write_json(out / "reports" / "model.json", trace.final_model.to_json());

  ModelClass cls = ModelClass::tabular_free();
  if (kind == ModelKind::linear) {
    cls = ModelClass::linear_trained(trace.last().surrogate_risk);
  } else if (capacity) {
    cls = ModelClass::tabular_capacity(*capacity);
  }
  json summary = {{"experiment", "custom"},
                  {"loss", loss.label()},
                  {"final_surrogate_risk", trace.last().surrogate_risk},
                  {"final_target_risk", trace.last().target_risk},
                  {"final_pairwise_accuracy", trace.last().pairwise_accuracy},
                  {"min_signed_margin", trace.last().min_signed_margin},
                  {"mean_signed_margin", trace.mean_signed_margin},
                  {"steps", trace.last().step},
                  {"converged", trace.converged},
                  {"monotone_violations", trace.monotone_violations},
                  {"model_class", to_string(cls.kind)},
                  {"risk_report", to_json(gaps(dataset, loss, spec, cls, &trace.final_model))}};
  if (!splits_cfg.is_null()) {
    const auto s =
        evaluate_ambiguity_splits(trace.final_model, dataset, ambiguous_fraction, hard_fraction);
    summary["splits"] = {{"distinct", s.distinct},
                         {"ambiguous", s.ambiguous},
                         {"hard", s.hard},
                         {"delta_threshold", s.delta_threshold},
                         {"hard_threshold", s.hard_threshold}};
  }
  write_json(out / "reports" / "summary.json", summary);
  io.out << "final surrogate risk " << num(trace.last().surrogate_risk) << ", accuracy "
         << num(trace.last().pairwise_accuracy) << "\n";
  return kExitOk;
}

int cmd_train(json cfg, const Options&, Io& io) {
  const std::string experiment = json_util::string_or(cfg, "experiment", "custom", "config");
  if (experiment == "synonym") return train_synonym(cfg, io);
  if (experiment == "capacity") return train_capacity(cfg, io);
  if (experiment == "custom") return train_custom(cfg, io);
  throw ConfigError("unknown experiment \"" + experiment +
                    "\" (expected synonym, capacity or custom)");
}

// ---------------------------------------------------------------- verify

struct VerifyResult {
  std::string csv;
  json summary;
  bool passed = true;
};

const std::string kBoundHeader =
    "case,description,bound_kind,lhs,rhs,coefficient,approximation_gap,slack\n";

std::string bound_row(const std::string& id, const std::string& description,
                      const BoundCheck& c) {
  return csv_row({id, description, std::string(to_string(c.kind)), num(c.lhs), num(c.rhs),
                  num(c.coefficient), num(c.approximation_gap), num(c.slack)});
}

VerifyResult verify_tightness(const json& cfg, json& resolved, double tol) {
  reject_unknown(cfg, with_common({"check", "tolerance", "loss", "losses", "gamma", "gammas", "U"}),
                 "verify");
  std::vector<SurrogateLoss> losses =
      cfg.contains("losses") ? loss_list(cfg, "losses", {})
                             : std::vector<SurrogateLoss>{loss_field(cfg, "loss", SurrogateLoss::logistic())};
  const auto gammas = cfg.contains("gammas")
                          ? number_list(cfg, "gammas", {}, "verify")
                          : std::vector<double>{json_util::number_or(cfg, "gamma", 1.0, "verify")};
  const double U = json_util::number_or(cfg, "U", kDefaultSearchBound, "verify");
  if (losses.empty() || gammas.empty()) throw ConfigError("tightness: empty loss or gamma list");
  resolved["losses"] = losses;
  resolved["gammas"] = gammas;
  resolved["U"] = U;

  VerifyResult r;
  r.csv = "loss,gamma,U,lhs,rhs,coefficient,slack,ratio,expected_ratio\n";
  json rows = json::array();
  for (const auto& loss : losses) {
    for (double g : gammas) {
      const auto c = tightness_witness(loss, g, U, tol);
      const double expected = consistency_coefficient_shifted(loss, g);
      const bool ok = c.holds(tol) && std::abs(c.ratio - expected) <= 1e-9 * std::max(1.0, expected);
      r.passed = r.passed && ok;
      r.csv += csv_row({loss.label(), num(g), num(U), num(c.lhs), num(c.rhs), num(c.coefficient),
                        num(c.slack), num(c.ratio), num(expected)});
      json row = to_json(c);
      row["loss"] = loss.label();
      row["gamma"] = g;
      row["expected_ratio"] = expected;
      rows.push_back(std::move(row));
    }
  }
  r.summary["rows"] = rows;
  return r;
}

VerifyResult verify_negative(const json& cfg, json& resolved) {
  reject_unknown(cfg, with_common({"check", "tolerance", "loss", "epsilons"}), "verify");
  const SurrogateLoss loss = loss_field(cfg, "loss", SurrogateLoss::logistic());
  const auto eps = number_list(cfg, "epsilons", {1e-1, 1e-2, 1e-3, 1e-4, 1e-5}, "verify");
  resolved["loss"] = loss;
  resolved["epsilons"] = eps;
  const auto rows = negative_demo(loss, gen_negative_construction(eps));
  VerifyResult r;
  r.csv =
      "epsilon,surrogate_estimation_error,target_estimation_error,squashed_surrogate_risk,"
      "squashed_target_error\n";
  double previous = std::numeric_limits<double>::infinity();
  for (const auto& row : rows) {
    r.csv += csv_row({num(row.epsilon), num(row.surrogate_estimation_error),
                      num(row.target_estimation_error), num(row.squashed_surrogate_risk),
                      num(row.squashed_target_error)});
    r.passed = r.passed && row.target_estimation_error == 1.0 && row.squashed_target_error == 1.0 &&
               row.surrogate_estimation_error < previous;
    previous = row.surrogate_estimation_error;
  }
  r.summary["final_surrogate_estimation_error"] = rows.back().surrogate_estimation_error;
  r.summary["target_estimation_error_always_one"] = std::all_of(
      rows.begin(), rows.end(), [](const auto& row) { return row.target_estimation_error == 1.0; });
  return r;
}

VerifyResult verify_fuzz(BoundKind kind, const json& cfg, json& resolved, double tol,
                         double coefficient_scale) {
  reject_unknown(cfg, with_common({"check", "tolerance", "cases", "debug_coefficient_scale"}),
                 "verify");
  const int cases = int_field(cfg, "cases", 500, "verify");
  const std::uint64_t seed = seed_of(cfg);
  resolved["cases"] = cases;
  resolved["debug_coefficient_scale"] = coefficient_scale;
  VerifyOptions options;
  options.tolerance = tol;
  options.coefficient_scale = coefficient_scale;
  const auto results = run_bound_fuzz(kind, cases, seed, options);
  VerifyResult r;
  r.csv = kBoundHeader;
  double worst = std::numeric_limits<double>::infinity();
  int failures = 0;
  for (const auto& fc : results) {
    r.csv += bound_row(std::to_string(fc.index), fc.description, fc.check);
    worst = std::min(worst, fc.check.slack);
    if (!fc.check.holds(tol)) ++failures;
  }
  r.passed = failures == 0;
  r.summary["cases"] = cases;
  r.summary["failures"] = failures;
  r.summary["min_slack"] = worst;
  return r;
}

VerifyResult verify_scaling(const json& cfg, json& resolved) {
  reject_unknown(cfg,
                 with_common({"check", "tolerance", "dataset", "model", "loss", "gamma", "alphas",
                              "final_below"}),
                 "verify");
  const SurrogateLoss loss = loss_field(cfg, "loss", SurrogateLoss::logistic());
  const double gamma = json_util::number_or(cfg, "gamma", 1.0, "verify");
  const auto alphas = number_list(cfg, "alphas", {1.0, 10.0, 100.0, 1000.0}, "verify");
  const double final_below = json_util::number_or(cfg, "final_below", 1e-12, "verify");
  resolved["loss"] = loss;
  resolved["gamma"] = gamma;
  resolved["alphas"] = alphas;
  resolved["final_below"] = final_below;

  PreferenceDataset dataset;
  ScoringModel model;
  if (cfg.contains("dataset")) {
    const fs::path p = input_path(cfg, "dataset", "verify");
    dataset = load_jsonl(p).normalized_copy();
    resolved["dataset"] = p.string();
    if (cfg.contains("model")) {
      const fs::path m = input_path(cfg, "model", "verify");
      model = ScoringModel::from_json(json::parse(read_text(m)));
      resolved["model"] = m.string();
    } else {
      throw ConfigError("scaling: a dataset needs a separating \"model\" checkpoint");
    }
  } else {
    // Separable synonym pairs scored +-0.25, raw margin 0.5 on every pair.
    dataset = gen_synonym_stress(20, 0.1, seed_of(cfg));
    model = ScoringModel::tabular(dataset);
    for (const auto& e : dataset.examples()) {
      model.set_raw(e.x, e.y, 0.25);
      model.set_raw(e.x, e.y_prime, -0.25);
    }
  }
  const auto rows = scaling_sweep(model, dataset, loss, gamma, alphas);
  VerifyResult r;
  r.csv = "alpha,approximation_gap_upper\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    r.csv += csv_row({num(rows[i].alpha), num(rows[i].approximation_gap_upper)});
    if (i > 0 && rows[i].approximation_gap_upper > rows[i - 1].approximation_gap_upper) {
      r.passed = false;
    }
  }
  r.passed = r.passed && rows.back().approximation_gap_upper < final_below;
  r.summary["final_value"] = rows.back().approximation_gap_upper;
  return r;
}

VerifyResult verify_bt(const json& cfg, json& resolved) {
  reject_unknown(cfg,
                 with_common({"check", "tolerance", "datasets", "contexts",
                              "responses_per_context", "reward_scale", "U", "tol", "max_gap"}),
                 "verify");
  const int datasets = int_field(cfg, "datasets", 10, "verify");
  const int contexts = int_field(cfg, "contexts", 3, "verify");
  const int k = int_field(cfg, "responses_per_context", 4, "verify");
  const double scale = json_util::number_or(cfg, "reward_scale", 2.0, "verify");
  const double U = json_util::number_or(cfg, "U", kDefaultSearchBound, "verify");
  const double tol = json_util::number_or(cfg, "tol", 1e-8, "verify");
  const double max_gap = json_util::number_or(cfg, "max_gap", 1e-6, "verify");
  if (datasets < 1) throw ConfigError("bt_minimizability: datasets must be >= 1");
  const std::uint64_t seed = seed_of(cfg);
  resolved.update({{"datasets", datasets}, {"contexts", contexts}, {"responses_per_context", k},
                   {"reward_scale", scale}, {"U", U}, {"tol", tol}, {"max_gap", max_gap}});
  VerifyResult r;
  r.csv = "dataset,seed,gap,max_argmin_error,argmins_match\n";
  double worst = 0.0;
  for (int i = 0; i < datasets; ++i) {
    const std::uint64_t s = seed + static_cast<std::uint64_t>(i);
    const auto res = bt_minimizability_check(gen_bradley_terry(contexts, k, scale, s), U, tol);
    r.csv += csv_row({std::to_string(i), std::to_string(s), num(res.gap), num(res.max_argmin_error),
                      res.argmins_match ? "true" : "false"});
    r.passed = r.passed && res.gap <= max_gap && res.argmins_match;
    worst = std::max(worst, res.gap);
  }
  r.summary["max_gap"] = worst;
  return r;
}

VerifyResult verify_capacity_gap(const json& cfg, json& resolved, double tol) {
  reject_unknown(cfg, with_common({"check", "tolerance", "loss", "K", "gamma"}), "verify");
  const SurrogateLoss loss = loss_field(cfg, "loss", SurrogateLoss::poly_hinge(1));
  const double K = json_util::number_or(cfg, "K", 1.0, "verify");
  const double gamma = json_util::number_or(cfg, "gamma", 2.0, "verify");
  resolved.update({{"loss", loss}, {"K", K}, {"gamma", gamma}});
  const auto dataset =
      PreferenceDataset::from_examples({{"x0", "y0", "y1", 1.0, 1.0, 0.0}}, true);
  const auto report =
      gaps(dataset, loss, MarginSpec::uniform(gamma), ModelClass::tabular_capacity(K));
  const double rho = margin_capacity_profile(loss, gamma, K);
  VerifyResult r;
  r.csv = "loss,K,gamma,approximation_gap,rho,slack\n";
  r.csv += csv_row({loss.label(), num(K), num(gamma), num(report.approximation_gap), num(rho),
                    num(report.approximation_gap - rho)});
  r.passed = report.approximation_gap >= rho - tol;
  r.summary["approximation_gap"] = report.approximation_gap;
  r.summary["rho"] = rho;
  return r;
}

ModelClass model_class_field(const json& j) {
  json_util::reject_unknown(j, {"kind", "U", "K", "gamma"}, "class");
  const auto kind = model_class_kind_from_string(json_util::string_or(j, "kind", "tabular_free", "class"));
  const double U = json_util::number_or(j, "U", kDefaultSearchBound, "class");
  switch (kind) {
    case ModelClassKind::tabular_free: return ModelClass::tabular_free(U);
    case ModelClassKind::tabular_capacity:
      return ModelClass::tabular_capacity(json_util::number(json_util::require(j, "K", "class"), "K", "class"));
    case ModelClassKind::quantized:
      return ModelClass::quantized(
          json_util::number(json_util::require(j, "gamma", "class"), "gamma", "class"), U);
    case ModelClassKind::linear_trained:
      throw ConfigError("class: linear_trained is not available from the command line");
  }
  return ModelClass::tabular_free(U);
}

VerifyResult verify_single(const json& cfg, json& resolved, double tol, double coefficient_scale) {
  reject_unknown(cfg,
                 with_common({"check", "tolerance", "dataset", "model", "loss", "margin", "class",
                              "debug_coefficient_scale"}),
                 "verify");
  const fs::path dpath = input_path(cfg, "dataset", "verify");
  const fs::path mpath = input_path(cfg, "model", "verify");
  const SurrogateLoss loss = loss_field(cfg, "loss", SurrogateLoss::logistic());
  const MarginSpec spec = margin_field(cfg, "margin", MarginSpec::none());
  const ModelClass cls = model_class_field(cfg.value("class", json::object()));
  resolved.update({{"dataset", dpath.string()}, {"model", mpath.string()}, {"loss", loss},
                   {"margin", spec}, {"class", cfg.value("class", json::object())},
                   {"debug_coefficient_scale", coefficient_scale}});
  const auto dataset = load_jsonl(dpath).normalized_copy();
  const auto model = ScoringModel::from_json(json::parse(read_text(mpath)));
  VerifyOptions options{tol, coefficient_scale};
  const auto check = verify_bound(model, dataset, loss, spec, cls, options);
  VerifyResult r;
  r.csv = kBoundHeader + bound_row("0", loss.label(), check);
  r.passed = check.holds(tol);
  r.summary["check"] = to_json(check);
  return r;
}

int cmd_verify(json cfg, const Options& opts, Io& io) {
  const std::string check = json_util::string_or(cfg, "check", "", "config");
  const double tol = json_util::number_or(cfg, "tolerance", kDefaultSlackTolerance, "config");
  if (!(tol > 0.0)) throw ConfigError("tolerance must be positive");
  double coefficient_scale = json_util::number_or(cfg, "debug_coefficient_scale", 1.0, "config");
  if (opts.halve_coefficient) coefficient_scale *= 0.5;
  if (!(coefficient_scale > 0.0)) throw ConfigError("debug_coefficient_scale must be positive");
  json resolved = {{"check", check}, {"tolerance", tol}, {"seed", seed_of(cfg)}};

  VerifyResult r;
  if (check == "tightness") {
    r = verify_tightness(cfg, resolved, tol);
  } else if (check == "negative") {
    r = verify_negative(cfg, resolved);
  } else if (check == "shifted") {
    r = verify_fuzz(BoundKind::gamma_shifted, cfg, resolved, tol, coefficient_scale);
  } else if (check == "structure_aware") {
    r = verify_fuzz(BoundKind::structure_aware, cfg, resolved, tol, coefficient_scale);
  } else if (check == "hard_margin") {
    r = verify_fuzz(BoundKind::hard_margin, cfg, resolved, tol, coefficient_scale);
  } else if (check == "scaling") {
    r = verify_scaling(cfg, resolved);
  } else if (check == "bt_minimizability") {
    r = verify_bt(cfg, resolved);
  } else if (check == "capacity_gap") {
    r = verify_capacity_gap(cfg, resolved, tol);
  } else if (check == "bound") {
    r = verify_single(cfg, resolved, tol, coefficient_scale);
  } else {
    throw ConfigError("unknown check \"" + check +
                      "\" (expected tightness, negative, shifted, structure_aware, hard_margin, "
                      "scaling, bt_minimizability, capacity_gap or bound)");
  }
  const fs::path out = output_dir(cfg);
  resolved["out"] = out.string();
  write_json(out / "config.json", resolved);
  write_text(out / "reports" / (check + ".csv"), r.csv);
  r.summary["check"] = check;
  r.summary["passed"] = r.passed;
  write_json(out / "reports" / "summary.json", r.summary);
  io.out << "check " << check << ": " << (r.passed ? "passed" : "FAILED") << "\n";
  if (!r.passed) throw VerificationFailed("check " + check + " failed");
  return kExitOk;
}

// ---------------------------------------------------------------- profile

int cmd_profile(json cfg, const Options& opts, Io& io) {
  reject_unknown(cfg, with_common({"gammas", "gamma_grid", "K", "losses", "epsilons", "svg"}),
                 "profile");
  ProfileConfig pc = ProfileConfig::defaults();
  if (cfg.contains("gammas") && cfg.contains("gamma_grid")) {
    throw ConfigError("profile: give either \"gammas\" or \"gamma_grid\", not both");
  }
  if (cfg.contains("gammas")) pc.gammas = number_list(cfg, "gammas", {}, "profile");
  if (auto it = cfg.find("gamma_grid"); it != cfg.end()) {
    json_util::reject_unknown(*it, {"start", "stop", "step"}, "gamma_grid");
    const double start = json_util::number(json_util::require(*it, "start", "gamma_grid"), "start", "gamma_grid");
    const double stop = json_util::number(json_util::require(*it, "stop", "gamma_grid"), "stop", "gamma_grid");
    const double step = json_util::number(json_util::require(*it, "step", "gamma_grid"), "step", "gamma_grid");
    if (!(step > 0.0) || !(stop >= start)) throw ConfigError("gamma_grid: need step > 0 and stop >= start");
    pc.gammas.clear();
    const auto n = static_cast<long long>(std::floor((stop - start) / step + 1e-9));
    if (n > 100000) throw ConfigError("gamma_grid: too many points");
    for (long long i = 0; i <= n; ++i) pc.gammas.push_back(start + static_cast<double>(i) * step);
  }
  pc.capacity_K = json_util::number_or(cfg, "K", pc.capacity_K, "profile");
  pc.losses = loss_list(cfg, "losses", pc.losses);
  pc.epsilons = number_list(cfg, "epsilons", pc.epsilons, "profile");
  const bool svg = opts.svg || json_util::bool_or(cfg, "svg", false, "profile");
  pc.validate();

  const auto report = run_profile_sweep(pc);
  const fs::path out = output_dir(cfg);
  json resolved = {{"gammas", pc.gammas}, {"K", pc.capacity_K}, {"losses", pc.losses},
                   {"epsilons", pc.epsilons}, {"svg", svg}, {"seed", seed_of(cfg)},
                   {"out", out.string()}};
  write_json(out / "config.json", resolved);
  write_text(out / "reports" / "profile.csv", profile_csv(report));
  write_text(out / "reports" / "profile_wide.csv", profile_wide_csv(report));
  write_json(out / "reports" / "summary.json", summary_json(report));
  if (svg) write_text(out / "reports" / "profile.svg", profile_svg(report));
  for (const auto& w : report.warnings) io.err << "warning: " << w << "\n";
  io.out << "wrote " << report.rows.size() << " profile rows to "
         << (out / "reports" / "profile.csv").string() << "\n";
  return kExitOk;
}

int dispatch(const Options& opts, Io& io) {
  json cfg = load_config(opts);
  if (opts.command == "generate") return cmd_generate(std::move(cfg), opts, io);
  if (opts.command == "train") return cmd_train(std::move(cfg), opts, io);
  if (opts.command == "verify") return cmd_verify(std::move(cfg), opts, io);
  return cmd_profile(std::move(cfg), opts, io);
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Surrogate-loss consistency lab", "lab"};
  app.require_subcommand(1);
  Options opts;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opts.config_path, "JSON config file")->required();
    sub->add_option("--out", opts.out, "Output directory (overrides \"out\")");
    sub->add_option("--seed", opts.seed, "Seed (overrides \"seed\")");
    sub->add_option("--set", opts.overrides, "Override a config key: key.path=json")
        ->take_all();
  };
  auto* gen = app.add_subcommand("generate", "Write a synthetic dataset");
  auto* trn = app.add_subcommand("train", "Train a model or run a packaged experiment");
  auto* ver = app.add_subcommand("verify", "Run a numerical bound check");
  auto* pro = app.add_subcommand("profile", "Tabulate margin-capacity profiles");
  for (auto* sub : {gen, trn, ver, pro}) add_common(sub);
  pro->add_flag("--svg", opts.svg, "Also write an SVG line chart");
  ver->add_flag("--debug-halve-coefficient", opts.halve_coefficient,
                "Halve the bound coefficient (the check is expected to fail)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::Error& e) {
    err << "lab: " << e.what() << "\n";
    return kExitConfig;
  }
  for (auto* sub : {gen, trn, ver, pro}) {
    if (sub->parsed()) opts.command = sub->get_name();
  }

  Io io{out, err};
  try {
    return dispatch(opts, io);
  } catch (const DivergenceError& e) {
    err << "lab: divergence: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const IoError& e) {
    err << "lab: io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const VerificationFailed& e) {
    err << "lab: verification failed: " << e.what() << "\n";
    return kExitVerification;
  } catch (const Error& e) {
    err << "lab: " << e.what() << "\n";
    return kExitConfig;
  } catch (const nlohmann::json::exception& e) {
    err << "lab: invalid JSON value: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "lab: internal error: " << e.what() << "\n";
    return kExitInternal;
  }
}

}  // namespace sarank

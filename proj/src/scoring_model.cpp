#include "sarank/scoring_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "sarank/error.hpp"
#include "sarank/json_util.hpp"
#include "sarank/numeric.hpp"

namespace sarank {

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::tabular: return "tabular";
    case ModelKind::linear: return "linear";
    case ModelKind::global: return "global";
  }
  return "tabular";
}

ModelKind model_kind_from_string(std::string_view name) {
  if (name == "tabular") return ModelKind::tabular;
  if (name == "linear") return ModelKind::linear;
  if (name == "global") return ModelKind::global;
  throw ConfigError("unknown model kind \"" + std::string(name) + "\"");
}

FeatureMap::FeatureMap(std::map<ScoreKey, std::vector<double>> features)
    : features_(std::move(features)) {
  for (const auto& [key, phi] : features_) {
    if (phi.empty()) throw DomainError("feature vector for (" + key.x + ", " + key.y + ") is empty");
    if (dimension_ == 0) dimension_ = phi.size();
    if (phi.size() != dimension_) {
      throw DomainError("feature vector for (" + key.x + ", " + key.y +
                        ") has inconsistent dimension");
    }
  }
}

const std::vector<double>& FeatureMap::at(const ScoreKey& key) const {
  auto it = features_.find(key);
  if (it == features_.end()) {
    throw LookupError("no features for (" + key.x + ", " + key.y + ")");
  }
  return it->second;
}

FeatureMap parse_features_jsonl(const std::string& text) {
  std::map<ScoreKey, std::vector<double>> features;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("malformed JSON: ") + e.what(), line_no);
    }
    const std::string ctx = "line " + std::to_string(line_no);
    json_util::reject_unknown(j, {"x", "y", "phi"}, ctx);
    const auto& x = json_util::require(j, "x", ctx);
    const auto& y = json_util::require(j, "y", ctx);
    const auto& phi = json_util::require(j, "phi", ctx);
    if (!x.is_string() || !y.is_string()) {
      throw SchemaError(ctx + ": fields \"x\" and \"y\" must be strings");
    }
    if (!phi.is_array()) throw SchemaError(ctx + ": field \"phi\" must be an array");
    std::vector<double> values;
    for (const auto& c : phi) values.push_back(json_util::number(c, "phi", ctx));
    features[{x.get<std::string>(), y.get<std::string>()}] = std::move(values);
  }
  return FeatureMap(std::move(features));
}

FeatureMap load_features_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_features_jsonl(buffer.str());
}

ScoringModel ScoringModel::tabular(const PreferenceDataset& dataset) {
  return tabular(dataset.score_keys());
}

ScoringModel ScoringModel::tabular(const std::vector<ScoreKey>& keys) {
  ScoringModel m;
  m.kind_ = ModelKind::tabular;
  for (const auto& key : keys) {
    if (m.index_.emplace(key, m.params_.size()).second) m.params_.push_back(0.0);
  }
  return m;
}

ScoringModel ScoringModel::global(const PreferenceDataset& dataset) {
  return global(dataset.response_ids());
}

ScoringModel ScoringModel::global(const std::vector<std::string>& response_ids) {
  ScoringModel m;
  m.kind_ = ModelKind::global;
  for (const auto& id : response_ids) {
    if (m.index_.emplace(ScoreKey{"", id}, m.params_.size()).second) m.params_.push_back(0.0);
  }
  return m;
}

ScoringModel ScoringModel::linear(std::shared_ptr<const FeatureMap> features,
                                  std::uint64_t seed) {
  if (!features || features->dimension() == 0) {
    throw DomainError("linear model requires a nonempty feature map");
  }
  ScoringModel m;
  m.kind_ = ModelKind::linear;
  m.features_ = std::move(features);
  Rng rng(seed);
  m.params_.resize(m.features_->dimension());
  for (auto& p : m.params_) p = rng.uniform(-0.01, 0.01);
  return m;
}

ScoringModel& ScoringModel::set_capacity(std::optional<double> capacity) {
  if (capacity && !(*capacity > 0.0 && std::isfinite(*capacity))) {
    throw DomainError("capacity K must be positive and finite");
  }
  capacity_ = capacity;
  return *this;
}

ScoringModel& ScoringModel::set_quantize_gamma(std::optional<double> gamma) {
  if (gamma && !(*gamma > 0.0 && std::isfinite(*gamma))) {
    throw DomainError("quantize_gamma must be positive and finite");
  }
  quantize_gamma_ = gamma;
  return *this;
}

std::size_t ScoringModel::param_index(const std::string& x, const std::string& y) const {
  if (kind_ == ModelKind::linear) {
    throw LookupError("linear models have no per-score parameter");
  }
  const ScoreKey key = kind_ == ModelKind::global ? ScoreKey{"", y} : ScoreKey{x, y};
  auto it = index_.find(key);
  if (it == index_.end()) {
    if (kind_ == ModelKind::global) throw LookupError("unknown response id \"" + y + "\"");
    throw LookupError("unknown score key (" + x + ", " + y + ")");
  }
  return it->second;
}

void ScoringModel::set_raw(const std::string& x, const std::string& y, double value) {
  params_[param_index(x, y)] = value;
}

double ScoringModel::raw_score(const std::string& x, const std::string& y) const {
  if (kind_ != ModelKind::linear) return params_[param_index(x, y)];
  const auto& phi = features_->at({x, y});
  double s = 0.0;
  for (std::size_t i = 0; i < phi.size(); ++i) s += params_[i] * phi[i];
  return s;
}

double ScoringModel::finish(double scaled) const {
  double s = scaled;
  if (capacity_) s = std::clamp(s, -*capacity_ / 2.0, *capacity_ / 2.0);
  if (quantize_gamma_) s = std::floor(s / *quantize_gamma_ + 0.5) * *quantize_gamma_;
  return s;
}

double ScoringModel::score_derivative(double scaled) const {
  if (capacity_ && std::abs(scaled) > *capacity_ / 2.0) return 0.0;
  return scale_alpha_;
}

double ScoringModel::score(const std::string& x, const std::string& y) const {
  return finish(scale_alpha_ * raw_score(x, y));
}

double ScoringModel::signed_margin(const PreferenceExample& e) const {
  return score(e.x, e.y) - score(e.x, e.y_prime);
}

ScoringModel ScoringModel::scale(double alpha) const {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) {
    throw DomainError("scale: alpha must be positive and finite");
  }
  ScoringModel out = *this;
  out.scale_alpha_ *= alpha;
  return out;
}

void ScoringModel::accumulate_margin_grad(const PreferenceExample& e, double coeff,
                                          std::vector<double>& grad) const {
  if (!trainable()) throw NotTrainableError("quantized models are not trainable");
  const double dy = score_derivative(scale_alpha_ * raw_score(e.x, e.y));
  const double dyp = score_derivative(scale_alpha_ * raw_score(e.x, e.y_prime));
  if (kind_ != ModelKind::linear) {
    grad[param_index(e.x, e.y)] += coeff * dy;
    grad[param_index(e.x, e.y_prime)] -= coeff * dyp;
    return;
  }
  const auto& phi_y = features_->at({e.x, e.y});
  const auto& phi_yp = features_->at({e.x, e.y_prime});
  for (std::size_t i = 0; i < params_.size(); ++i) {
    grad[i] += coeff * (dy * phi_y[i] - dyp * phi_yp[i]);
  }
}

std::vector<double> ScoringModel::grad_params(const PreferenceExample& e,
                                              const SurrogateLoss& loss,
                                              const MarginSpec& spec, int label_w) const {
  if (!trainable()) throw NotTrainableError("quantized models are not trainable");
  if (label_w != 1 && label_w != -1) throw DomainError("grad_params: label_w must be +1 or -1");
  std::vector<double> grad(params_.size(), 0.0);
  const double u = label_w * signed_margin(e);
  const double dphi = eval_shifted_grad(loss, spec, u, e.delta);
  accumulate_margin_grad(e, dphi * label_w, grad);
  return grad;
}

void ScoringModel::project() {
  if (!capacity_ || kind_ == ModelKind::linear) return;
  const double bound = *capacity_ / (2.0 * scale_alpha_);
  for (auto& p : params_) p = std::clamp(p, -bound, bound);
}

nlohmann::json ScoringModel::to_json() const {
  nlohmann::json j;
  j["kind"] = to_string(kind_);
  if (kind_ == ModelKind::linear) {
    j["params"] = params_;
  } else {
    nlohmann::json p = nlohmann::json::object();
    for (const auto& [key, idx] : index_) {
      if (kind_ == ModelKind::global) {
        p[key.y] = params_[idx];
      } else {
        p[key.x][key.y] = params_[idx];
      }
    }
    j["params"] = std::move(p);
  }
  j["capacity_K"] = capacity_ ? nlohmann::json(*capacity_) : nlohmann::json(nullptr);
  j["quantize_gamma"] =
      quantize_gamma_ ? nlohmann::json(*quantize_gamma_) : nlohmann::json(nullptr);
  j["scale_alpha"] = scale_alpha_;
  return j;
}

namespace {

std::optional<double> optional_positive(const nlohmann::json& j, std::string_view key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return json_util::number(*it, key, "model");
}

}  // namespace

ScoringModel ScoringModel::from_json(const nlohmann::json& j,
                                     std::shared_ptr<const FeatureMap> features) {
  json_util::reject_unknown(j, {"kind", "params", "capacity_K", "quantize_gamma", "scale_alpha"},
                            "model");
  const auto& kind_field = json_util::require(j, "kind", "model");
  if (!kind_field.is_string()) throw SchemaError("model: field \"kind\" must be a string");
  const ModelKind kind = model_kind_from_string(kind_field.get<std::string>());
  const auto& params = json_util::require(j, "params", "model");
  ScoringModel m;
  if (kind == ModelKind::linear) {
    if (!params.is_array()) throw SchemaError("model: linear params must be an array");
    m = linear(std::move(features), 0);
    if (params.size() != m.params_.size()) {
      throw SchemaError("model: linear params do not match the feature dimension");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      m.params_[i] = json_util::number(params[i], "params", "model");
    }
  } else if (kind == ModelKind::global) {
    if (!params.is_object()) throw SchemaError("model: global params must be an object");
    std::vector<std::string> ids;
    for (const auto& item : params.items()) ids.push_back(item.key());
    m = global(ids);
    for (const auto& item : params.items()) {
      m.set_raw("", item.key(), json_util::number(item.value(), "params", "model"));
    }
  } else {
    if (!params.is_object()) throw SchemaError("model: tabular params must be an object");
    std::vector<ScoreKey> keys;
    for (const auto& ctx : params.items()) {
      if (!ctx.value().is_object()) {
        throw SchemaError("model: tabular params must nest {\"x\": {\"y\": value}}");
      }
      for (const auto& resp : ctx.value().items()) keys.push_back({ctx.key(), resp.key()});
    }
    m = tabular(keys);
    for (const auto& ctx : params.items()) {
      for (const auto& resp : ctx.value().items()) {
        m.set_raw(ctx.key(), resp.key(), json_util::number(resp.value(), "params", "model"));
      }
    }
  }
  m.set_capacity(optional_positive(j, "capacity_K"));
  m.set_quantize_gamma(optional_positive(j, "quantize_gamma"));
  const double alpha = json_util::number_or(j, "scale_alpha", 1.0, "model");
  if (!(alpha > 0.0)) throw SchemaError("model: scale_alpha must be positive");
  m.scale_alpha_ = alpha;
  return m;
}

}  // namespace sarank

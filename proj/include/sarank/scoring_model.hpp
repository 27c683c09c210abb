#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "sarank/preference_data.hpp"
#include "sarank/surrogate_loss.hpp"

namespace sarank {

enum class ModelKind { tabular, linear, global };

std::string_view to_string(ModelKind kind);
ModelKind model_kind_from_string(std::string_view name);

// Feature vectors phi(x, y) of one fixed dimension for the linear kind.
class FeatureMap {
 public:
  FeatureMap() = default;
  explicit FeatureMap(std::map<ScoreKey, std::vector<double>> features);

  std::size_t dimension() const { return dimension_; }
  const std::vector<double>& at(const ScoreKey& key) const;
  bool contains(const ScoreKey& key) const { return features_.count(key) > 0; }
  const std::map<ScoreKey, std::vector<double>>& features() const { return features_; }

 private:
  std::map<ScoreKey, std::vector<double>> features_;
  std::size_t dimension_ = 0;
};

// Lines {"x": ..., "y": ..., "phi": [f, ...]}.
FeatureMap load_features_jsonl(const std::filesystem::path& path);
FeatureMap parse_features_jsonl(const std::string& text);

// h(x, y) = quantize(clamp(alpha * raw(x, y))). raw is a table entry per
// (x, y) for tabular, per y for global, and w . phi(x, y) for linear.
class ScoringModel {
 public:
  // One zero-initialized parameter per (x, y) key of the dataset.
  static ScoringModel tabular(const PreferenceDataset& dataset);
  static ScoringModel tabular(const std::vector<ScoreKey>& keys);

  // One zero-initialized parameter per response id.
  static ScoringModel global(const PreferenceDataset& dataset);
  static ScoringModel global(const std::vector<std::string>& response_ids);

  // Weights uniform in [-0.01, 0.01] from `seed`.
  static ScoringModel linear(std::shared_ptr<const FeatureMap> features, std::uint64_t seed);

  ModelKind kind() const { return kind_; }
  const std::optional<double>& capacity() const { return capacity_; }
  const std::optional<double>& quantize_gamma() const { return quantize_gamma_; }
  double scale_alpha() const { return scale_alpha_; }

  // Throws DomainError unless K > 0 (or nullopt).
  ScoringModel& set_capacity(std::optional<double> capacity);
  ScoringModel& set_quantize_gamma(std::optional<double> gamma);

  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }
  std::size_t num_params() const { return params_.size(); }

  // Parameter slot of a tabular (x, y) entry or global y entry.
  std::size_t param_index(const std::string& x, const std::string& y) const;

  // Sets the raw (pre-scale) tabular or global entry.
  void set_raw(const std::string& x, const std::string& y, double value);

  double raw_score(const std::string& x, const std::string& y) const;
  double score(const std::string& x, const std::string& y) const;
  double signed_margin(const PreferenceExample& example) const;

  // Copy with scale_alpha multiplied by alpha. Throws DomainError for alpha <= 0.
  ScoringModel scale(double alpha) const;

  bool trainable() const { return !quantize_gamma_.has_value(); }

  // Adds coeff * d(signed_margin)/d(params) into grad (size num_params()).
  void accumulate_margin_grad(const PreferenceExample& example, double coeff,
                              std::vector<double>& grad) const;

  // Gradient of eval_shifted(loss, spec, w * signed_margin, delta).
  // Throws NotTrainableError for quantized models.
  std::vector<double> grad_params(const PreferenceExample& example, const SurrogateLoss& loss,
                                  const MarginSpec& spec, int label_w) const;

  // Clamps tabular/global parameters so that alpha * raw lies in
  // [-K/2, K/2]. Linear models rely on the score clamp alone.
  void project();

  // {"kind", "params", "capacity_K", "quantize_gamma", "scale_alpha"}.
  nlohmann::json to_json() const;

  // Linear checkpoints need the feature map they were trained with.
  static ScoringModel from_json(const nlohmann::json& j,
                                std::shared_ptr<const FeatureMap> features = nullptr);

 private:
  double finish(double scaled) const;
  double score_derivative(double scaled) const;

  ModelKind kind_ = ModelKind::tabular;
  std::vector<double> params_;
  std::map<ScoreKey, std::size_t> index_;
  std::shared_ptr<const FeatureMap> features_;
  std::optional<double> capacity_;
  std::optional<double> quantize_gamma_;
  double scale_alpha_ = 1.0;
};

}  // namespace sarank

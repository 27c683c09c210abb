#pragma once

#include <compare>
#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace sarank {

// Identifies one score h(x, y).
struct ScoreKey {
  std::string x;
  std::string y;

  auto operator<=>(const ScoreKey&) const = default;
};

// One support tuple of a finite preference distribution. eta is the exact
// probability that y is preferred to y_prime; mass is the probability of the
// tuple itself; delta is the semantic distance between the two responses.
struct PreferenceExample {
  std::string x;
  std::string y;
  std::string y_prime;
  double eta = 1.0;
  double mass = 1.0;
  double delta = 0.0;

  bool operator==(const PreferenceExample&) const = default;
};

// Immutable finite-support distribution. Construction validates every
// example and merges duplicate (x, y, y') tuples by adding their masses.
class PreferenceDataset {
 public:
  PreferenceDataset() = default;

  // Duplicates are merged: masses add, eta becomes the mass-weighted mean.
  // Each merge appends a message to `warnings` when it is non-null.
  // When `normalize` is true the masses are rescaled to sum to one.
  static PreferenceDataset from_examples(std::vector<PreferenceExample> examples,
                                         bool normalize,
                                         std::vector<std::string>* warnings = nullptr);

  const std::vector<PreferenceExample>& examples() const { return examples_; }
  std::size_t size() const { return examples_.size(); }
  bool empty() const { return examples_.empty(); }
  bool normalized() const { return normalized_; }

  double total_mass() const;

  // Copy with masses rescaled to sum to one.
  PreferenceDataset normalized_copy() const;

  // Copy with every delta replaced.
  PreferenceDataset with_deltas(const std::vector<double>& deltas) const;

  // Every distinct (x, y) score the examples touch, sorted.
  std::vector<ScoreKey> score_keys() const;

  // Every distinct response identifier, sorted.
  std::vector<std::string> response_ids() const;

  bool operator==(const PreferenceDataset&) const = default;

 private:
  std::vector<PreferenceExample> examples_;
  bool normalized_ = false;
};

// Throws DomainError when an example violates the tuple invariants.
void validate_example(const PreferenceExample& example);

// Throws PreconditionError unless the masses sum to one within 1e-9.
void require_normalized(const PreferenceDataset& dataset, const char* op);

// One JSON object per line with keys x, y, y_prime, eta, mass, delta.
PreferenceDataset load_jsonl(const std::filesystem::path& path,
                             std::vector<std::string>* warnings = nullptr);
void save_jsonl(const PreferenceDataset& dataset, const std::filesystem::path& path);

// In-memory forms of the same format.
PreferenceDataset parse_jsonl(const std::string& text, std::vector<std::string>* warnings = nullptr);
std::string serialize_jsonl(const PreferenceDataset& dataset);

// Latent rewards of a Bradley-Terry style generator, keyed by (x, y).
using LatentRewards = std::map<ScoreKey, double>;

struct LatentDataset {
  PreferenceDataset dataset;
  LatentRewards rewards;
};

// Lines {"x": ..., "y": ..., "reward": ...}.
void save_latents_jsonl(const LatentRewards& rewards, const std::filesystem::path& path);
LatentRewards load_latents_jsonl(const std::filesystem::path& path);

}  // namespace sarank

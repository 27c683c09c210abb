#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "sarank/preference_data.hpp"

namespace sarank {

// Levenshtein distance over UTF-8 code points divided by the longer length.
// Both strings empty gives 0. Bytes that are not valid UTF-8 count as one
// code point each.
double normalized_edit_distance(std::string_view a, std::string_view b);

// 1 - cos(u, v). Throws DomainError on dimension mismatch or a zero vector.
double cosine_distance(const std::vector<double>& u, const std::vector<double>& v);

// Precomputed response embeddings, all of one dimension.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;

  // Throws DomainError on empty vectors, mixed dimensions, zero or
  // non-finite vectors.
  explicit EmbeddingTable(std::map<std::string, std::vector<double>> vectors);

  std::size_t dimension() const { return dimension_; }
  std::size_t size() const { return vectors_.size(); }

  // Throws LookupError naming the id.
  const std::vector<double>& at(const std::string& id) const;

  const std::map<std::string, std::vector<double>>& vectors() const { return vectors_; }

 private:
  std::map<std::string, std::vector<double>> vectors_;
  std::size_t dimension_ = 0;
};

// Lines {"id": string, "vec": [f, ...]}.
EmbeddingTable load_embeddings_jsonl(const std::filesystem::path& path);
EmbeddingTable parse_embeddings_jsonl(const std::string& text);

struct EditDistanceSource {};

struct EmbeddingDistanceSource {
  EmbeddingTable table;
};

struct ConstantDistanceSource {
  double value = 0.0;
};

using DistanceSource =
    std::variant<EditDistanceSource, EmbeddingDistanceSource, ConstantDistanceSource>;

// Recomputes every delta. The edit metric reads response identifiers as text.
PreferenceDataset attach_distances(const PreferenceDataset& dataset, const DistanceSource& source);

}  // namespace sarank

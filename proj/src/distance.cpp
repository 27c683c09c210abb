#include "sarank/distance.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "sarank/error.hpp"
#include "sarank/json_util.hpp"

namespace sarank {

namespace {

std::vector<char32_t> decode_utf8(std::string_view s) {
  std::vector<char32_t> out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const auto lead = static_cast<unsigned char>(s[i]);
    std::size_t len = 0;
    char32_t cp = 0;
    if (lead < 0x80) {
      len = 1;
      cp = lead;
    } else if ((lead & 0xE0) == 0xC0) {
      len = 2;
      cp = lead & 0x1F;
    } else if ((lead & 0xF0) == 0xE0) {
      len = 3;
      cp = lead & 0x0F;
    } else if ((lead & 0xF8) == 0xF0) {
      len = 4;
      cp = lead & 0x07;
    }
    bool valid = len > 0 && i + len <= s.size();
    for (std::size_t k = 1; valid && k < len; ++k) {
      const auto c = static_cast<unsigned char>(s[i + k]);
      if ((c & 0xC0) != 0x80) {
        valid = false;
      } else {
        cp = (cp << 6) | (c & 0x3F);
      }
    }
    if (!valid) {
      // Raw byte, offset out of the code point range so it never equals one.
      out.push_back(0x110000 + lead);
      ++i;
      continue;
    }
    out.push_back(cp);
    i += len;
  }
  return out;
}

}  // namespace

double normalized_edit_distance(std::string_view a, std::string_view b) {
  const auto s = decode_utf8(a);
  const auto t = decode_utf8(b);
  const std::size_t longest = std::max(s.size(), t.size());
  if (longest == 0) return 0.0;
  std::vector<std::size_t> row(t.size() + 1);
  for (std::size_t j = 0; j <= t.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= s.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= t.size(); ++j) {
      const std::size_t up = row[j];
      const std::size_t sub = diag + (s[i - 1] == t[j - 1] ? 0 : 1);
      row[j] = std::min({up + 1, row[j - 1] + 1, sub});
      diag = up;
    }
  }
  return static_cast<double>(row[t.size()]) / static_cast<double>(longest);
}

double cosine_distance(const std::vector<double>& u, const std::vector<double>& v) {
  if (u.size() != v.size()) {
    throw DomainError("cosine_distance: dimension mismatch (" + std::to_string(u.size()) +
                      " vs " + std::to_string(v.size()) + ")");
  }
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (!(nu > 0.0) || !(nv > 0.0)) throw DomainError("cosine_distance: zero vector");
  if (u == v) return 0.0;
  const double cos = std::clamp(dot / (std::sqrt(nu) * std::sqrt(nv)), -1.0, 1.0);
  return 1.0 - cos;
}

EmbeddingTable::EmbeddingTable(std::map<std::string, std::vector<double>> vectors)
    : vectors_(std::move(vectors)) {
  for (const auto& [id, vec] : vectors_) {
    if (vec.empty()) throw DomainError("embedding \"" + id + "\" is empty");
    if (dimension_ == 0) dimension_ = vec.size();
    if (vec.size() != dimension_) {
      throw DomainError("embedding \"" + id + "\" has dimension " + std::to_string(vec.size()) +
                        ", expected " + std::to_string(dimension_));
    }
    bool nonzero = false;
    for (double c : vec) {
      if (!std::isfinite(c)) throw DomainError("embedding \"" + id + "\" is not finite");
      nonzero = nonzero || c != 0.0;
    }
    if (!nonzero) throw DomainError("embedding \"" + id + "\" is the zero vector");
  }
}

const std::vector<double>& EmbeddingTable::at(const std::string& id) const {
  auto it = vectors_.find(id);
  if (it == vectors_.end()) throw LookupError("no embedding for response id \"" + id + "\"");
  return it->second;
}

EmbeddingTable parse_embeddings_jsonl(const std::string& text) {
  std::map<std::string, std::vector<double>> vectors;
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
    json_util::reject_unknown(j, {"id", "vec"}, ctx);
    const auto& id = json_util::require(j, "id", ctx);
    const auto& vec = json_util::require(j, "vec", ctx);
    if (!id.is_string()) throw SchemaError(ctx + ": field \"id\" must be a string");
    if (!vec.is_array()) throw SchemaError(ctx + ": field \"vec\" must be an array");
    std::vector<double> values;
    for (const auto& c : vec) values.push_back(json_util::number(c, "vec", ctx));
    if (!vectors.emplace(id.get<std::string>(), std::move(values)).second) {
      throw SchemaError(ctx + ": duplicate embedding id \"" + id.get<std::string>() + "\"");
    }
  }
  return EmbeddingTable(std::move(vectors));
}

EmbeddingTable load_embeddings_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_embeddings_jsonl(buffer.str());
}

PreferenceDataset attach_distances(const PreferenceDataset& dataset,
                                   const DistanceSource& source) {
  std::vector<double> deltas;
  deltas.reserve(dataset.size());
  for (const auto& e : dataset.examples()) {
    double d = 0.0;
    if (std::holds_alternative<EditDistanceSource>(source)) {
      d = normalized_edit_distance(e.y, e.y_prime);
    } else if (const auto* emb = std::get_if<EmbeddingDistanceSource>(&source)) {
      d = cosine_distance(emb->table.at(e.y), emb->table.at(e.y_prime));
    } else {
      d = std::get<ConstantDistanceSource>(source).value;
    }
    deltas.push_back(d);
  }
  return dataset.with_deltas(deltas);
}

}  // namespace sarank

#include "sarank/preference_data.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include "json.hpp"
#include "sarank/error.hpp"
#include "sarank/json_util.hpp"
#include "sarank/numeric.hpp"

namespace sarank {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr double kMassTolerance = 1e-9;

bool masses_sum_to_one(const std::vector<PreferenceExample>& examples) {
  CompensatedSum total;
  for (const auto& e : examples) total += e.mass;
  return std::abs(total.value() - 1.0) <= kMassTolerance;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  if (in.bad()) throw IoError("failed reading " + path.string());
  return buffer.str();
}

void write_file(const std::filesystem::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << contents;
  out.flush();
  if (!out) throw IoError("failed writing " + path.string());
}

template <typename Fn>
void for_each_line(const std::string& text, Fn&& fn) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = text.find('\n', pos);
    const std::size_t stop = end == std::string::npos ? text.size() : end;
    ++line_no;
    std::string line = text.substr(pos, stop - pos);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") != std::string::npos) fn(line, line_no);
    if (end == std::string::npos) break;
    pos = end + 1;
  }
}

nlohmann::json parse_line(const std::string& line, std::size_t line_no) {
  try {
    return nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what(), line_no);
  }
}

std::string line_context(std::size_t line_no) { return "line " + std::to_string(line_no); }

std::string string_field(const nlohmann::json& j, std::string_view key, const std::string& ctx) {
  const auto& v = json_util::require(j, key, ctx);
  if (!v.is_string()) {
    throw SchemaError(ctx + ": field \"" + std::string(key) + "\" must be a string");
  }
  return v.get<std::string>();
}

}  // namespace

void validate_example(const PreferenceExample& e) {
  if (e.y == e.y_prime) {
    throw DomainError("example (" + e.x + ", " + e.y + ", " + e.y_prime +
                      "): y and y_prime must differ");
  }
  if (!(e.eta >= 0.0 && e.eta <= 1.0)) {
    throw DomainError("example (" + e.x + ", " + e.y + ", " + e.y_prime +
                      "): eta must lie in [0, 1]");
  }
  if (!(e.mass > 0.0) || !std::isfinite(e.mass)) {
    throw DomainError("example (" + e.x + ", " + e.y + ", " + e.y_prime +
                      "): mass must be positive and finite");
  }
  if (!(e.delta >= 0.0) || !std::isfinite(e.delta)) {
    throw DomainError("example (" + e.x + ", " + e.y + ", " + e.y_prime +
                      "): delta must be finite and >= 0");
  }
}

PreferenceDataset PreferenceDataset::from_examples(std::vector<PreferenceExample> examples,
                                                   bool normalize,
                                                   std::vector<std::string>* warnings) {
  std::map<std::tuple<std::string, std::string, std::string>, std::size_t> index;
  std::vector<PreferenceExample> merged;
  merged.reserve(examples.size());
  for (auto& e : examples) {
    validate_example(e);
    auto key = std::make_tuple(e.x, e.y, e.y_prime);
    auto it = index.find(key);
    if (it == index.end()) {
      index.emplace(std::move(key), merged.size());
      merged.push_back(std::move(e));
      continue;
    }
    auto& kept = merged[it->second];
    const double total = kept.mass + e.mass;
    kept.eta = (kept.eta * kept.mass + e.eta * e.mass) / total;
    kept.mass = total;
    if (warnings != nullptr) {
      warnings->push_back("merged duplicate tuple (" + e.x + ", " + e.y + ", " + e.y_prime +
                          "), combined mass " + format_number(total));
    }
  }
  if (normalize && !merged.empty()) {
    CompensatedSum total;
    for (const auto& e : merged) total += e.mass;
    for (auto& e : merged) e.mass /= total.value();
  }
  PreferenceDataset out;
  out.normalized_ = !merged.empty() && masses_sum_to_one(merged);
  out.examples_ = std::move(merged);
  return out;
}

double PreferenceDataset::total_mass() const {
  CompensatedSum total;
  for (const auto& e : examples_) total += e.mass;
  return total.value();
}

PreferenceDataset PreferenceDataset::normalized_copy() const {
  return from_examples(examples_, true);
}

PreferenceDataset PreferenceDataset::with_deltas(const std::vector<double>& deltas) const {
  if (deltas.size() != examples_.size()) {
    throw DomainError("with_deltas: expected one delta per example");
  }
  PreferenceDataset out = *this;
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    out.examples_[i].delta = deltas[i];
    validate_example(out.examples_[i]);
  }
  return out;
}

std::vector<ScoreKey> PreferenceDataset::score_keys() const {
  std::set<ScoreKey> keys;
  for (const auto& e : examples_) {
    keys.insert({e.x, e.y});
    keys.insert({e.x, e.y_prime});
  }
  return {keys.begin(), keys.end()};
}

std::vector<std::string> PreferenceDataset::response_ids() const {
  std::set<std::string> ids;
  for (const auto& e : examples_) {
    ids.insert(e.y);
    ids.insert(e.y_prime);
  }
  return {ids.begin(), ids.end()};
}

void require_normalized(const PreferenceDataset& dataset, const char* op) {
  if (!dataset.normalized()) {
    throw PreconditionError(std::string(op) +
                            ": dataset masses must sum to 1 (normalize it first)");
  }
}

PreferenceDataset parse_jsonl(const std::string& text, std::vector<std::string>* warnings) {
  std::vector<PreferenceExample> examples;
  for_each_line(text, [&](const std::string& line, std::size_t line_no) {
    const auto j = parse_line(line, line_no);
    const std::string ctx = line_context(line_no);
    json_util::reject_unknown(j, {"x", "y", "y_prime", "eta", "mass", "delta"}, ctx);
    PreferenceExample e;
    e.x = string_field(j, "x", ctx);
    e.y = string_field(j, "y", ctx);
    e.y_prime = string_field(j, "y_prime", ctx);
    e.eta = json_util::number(json_util::require(j, "eta", ctx), "eta", ctx);
    e.mass = json_util::number(json_util::require(j, "mass", ctx), "mass", ctx);
    e.delta = json_util::number_or(j, "delta", 0.0, ctx);
    try {
      validate_example(e);
    } catch (const DomainError& err) {
      throw SchemaError(ctx + ": " + err.what());
    }
    examples.push_back(std::move(e));
  });
  return PreferenceDataset::from_examples(std::move(examples), false, warnings);
}

std::string serialize_jsonl(const PreferenceDataset& dataset) {
  std::string out;
  for (const auto& e : dataset.examples()) {
    ordered_json j;
    j["x"] = e.x;
    j["y"] = e.y;
    j["y_prime"] = e.y_prime;
    j["eta"] = e.eta;
    j["mass"] = e.mass;
    j["delta"] = e.delta;
    out += j.dump();
    out += '\n';
  }
  return out;
}

PreferenceDataset load_jsonl(const std::filesystem::path& path,
                             std::vector<std::string>* warnings) {
  return parse_jsonl(read_file(path), warnings);
}

void save_jsonl(const PreferenceDataset& dataset, const std::filesystem::path& path) {
  write_file(path, serialize_jsonl(dataset));
}

void save_latents_jsonl(const LatentRewards& rewards, const std::filesystem::path& path) {
  std::string out;
  for (const auto& [key, reward] : rewards) {
    ordered_json j;
    j["x"] = key.x;
    j["y"] = key.y;
    j["reward"] = reward;
    out += j.dump();
    out += '\n';
  }
  write_file(path, out);
}

LatentRewards load_latents_jsonl(const std::filesystem::path& path) {
  LatentRewards rewards;
  for_each_line(read_file(path), [&](const std::string& line, std::size_t line_no) {
    const auto j = parse_line(line, line_no);
    const std::string ctx = line_context(line_no);
    json_util::reject_unknown(j, {"x", "y", "reward"}, ctx);
    ScoreKey key{string_field(j, "x", ctx), string_field(j, "y", ctx)};
    rewards[key] = json_util::number(json_util::require(j, "reward", ctx), "reward", ctx);
  });
  return rewards;
}

}  // namespace sarank

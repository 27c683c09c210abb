#pragma once

#include <initializer_list>
#include <string>
#include <string_view>

#include "json.hpp"
#include "sarank/error.hpp"

namespace sarank::json_util {

// Throws SchemaError naming the first key of `j` not listed in `allowed`.
inline void reject_unknown(const nlohmann::json& j,
                           std::initializer_list<std::string_view> allowed,
                           std::string_view context) {
  if (!j.is_object()) {
    throw SchemaError(std::string(context) + ": expected a JSON object");
  }
  for (const auto& item : j.items()) {
    bool known = false;
    for (auto key : allowed) {
      if (item.key() == key) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw SchemaError(std::string(context) + ": unknown field \"" + item.key() + "\"");
    }
  }
}

inline const nlohmann::json& require(const nlohmann::json& j, std::string_view key,
                                     std::string_view context) {
  auto it = j.find(key);
  if (it == j.end()) {
    throw SchemaError(std::string(context) + ": missing required field \"" +
                      std::string(key) + "\"");
  }
  return *it;
}

inline double number(const nlohmann::json& v, std::string_view key, std::string_view context) {
  if (!v.is_number()) {
    throw SchemaError(std::string(context) + ": field \"" + std::string(key) +
                      "\" must be a number");
  }
  return v.get<double>();
}

inline double number_or(const nlohmann::json& j, std::string_view key, double fallback,
                        std::string_view context) {
  auto it = j.find(key);
  return it == j.end() ? fallback : number(*it, key, context);
}

inline long long integer_or(const nlohmann::json& j, std::string_view key, long long fallback,
                            std::string_view context) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  if (!it->is_number_integer()) {
    throw SchemaError(std::string(context) + ": field \"" + std::string(key) +
                      "\" must be an integer");
  }
  return it->get<long long>();
}

inline std::string string_or(const nlohmann::json& j, std::string_view key,
                             std::string fallback, std::string_view context) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  if (!it->is_string()) {
    throw SchemaError(std::string(context) + ": field \"" + std::string(key) +
                      "\" must be a string");
  }
  return it->get<std::string>();
}

inline bool bool_or(const nlohmann::json& j, std::string_view key, bool fallback,
                    std::string_view context) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  if (!it->is_boolean()) {
    throw SchemaError(std::string(context) + ": field \"" + std::string(key) +
                      "\" must be a boolean");
  }
  return it->get<bool>();
}

}  // namespace sarank::json_util

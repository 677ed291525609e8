#pragma once

// Strict field readers for JSON config documents.

#include "brantx/common.hpp"

#include <json.hpp>

#include <algorithm>
#include <initializer_list>
#include <string>
#include <string_view>

namespace brantx {

using Json = nlohmann::json;

// Throws if `j` carries a key outside `known`.
inline void check_known_fields(const Json& j, std::initializer_list<std::string_view> known, std::string_view what) {
  if (!j.is_object()) throw ValidationError(std::string(what) + " must be a JSON object");
  for (const auto& item : j.items())
    if (std::find(known.begin(), known.end(), item.key()) == known.end())
      throw ValidationError("unknown " + std::string(what) + " field '" + item.key() + "'");
}

// Reads j[key] into out when present.
template <class T>
void read_field(const Json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("config field '") + key + "' has the wrong type: " + e.what());
  }
}

}  // namespace brantx

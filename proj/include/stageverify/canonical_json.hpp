#pragma once

#include <string>

#include <json.hpp>

namespace sv {

/// Minified JSON with "type" (when present) as the first key and every other
/// key in byte order. Nested objects are sorted by the json library itself.
inline std::string canonical_dump(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("type")) return j.dump();
  nlohmann::json rest = j;
  std::string out = "{\"type\":" + j.at("type").dump();
  rest.erase("type");
  if (rest.empty()) return out + "}";
  std::string tail = rest.dump();
  out += ",";
  out.append(tail, 1, std::string::npos);
  return out;
}

}  // namespace sv

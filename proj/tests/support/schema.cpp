#include "schema.hpp"

#include <fstream>

namespace schema {
namespace {

using nlohmann::json;

bool leaf_matches(const json& v, const std::string& type) {
  if (type == "integer") return v.is_number_integer();
  if (type == "number") return v.is_number();
  if (type == "string") return v.is_string();
  if (type == "boolean") return v.is_boolean();
  if (type == "number-array-or-null") {
    if (v.is_null()) return true;
    if (!v.is_array()) return false;
    for (const auto& e : v) {
      if (!e.is_number()) return false;
    }
    return true;
  }
  return false;
}

void walk(const json& value, const json& schema, const std::string& where, std::vector<std::string>& out) {
  if (schema.is_string()) {
    if (!leaf_matches(value, schema.get<std::string>())) {
      out.push_back(where + ": expected " + schema.get<std::string>() + ", got " + value.type_name());
    }
  } else if (schema.is_array()) {
    if (!value.is_array()) {
      out.push_back(where + ": expected array");
      return;
    }
    for (std::size_t i = 0; i < value.size(); ++i) walk(value[i], schema[0], where + "[" + std::to_string(i) + "]", out);
  } else {
    if (!value.is_object()) {
      out.push_back(where + ": expected object");
      return;
    }
    for (const auto& [key, sub] : schema.items()) {
      if (!value.contains(key)) {
        out.push_back(where + "." + key + ": missing");
      } else {
        walk(value[key], sub, where + "." + key, out);
      }
    }
    for (const auto& [key, sub] : value.items()) {
      if (!schema.contains(key)) out.push_back(where + "." + key + ": undeclared key");
    }
  }
}

}  // namespace

std::vector<std::string> violations(const json& value, const json& schema) {
  std::vector<std::string> out;
  walk(value, schema, "$", out);
  return out;
}

json load(const std::string& path) {
  std::ifstream in(path);
  return json::parse(in);
}

}  // namespace schema

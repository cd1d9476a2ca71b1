#pragma once

// Strict readers shared by the versioned file formats: every object lists its
// allowed keys, and a missing or mistyped field names its dotted path.

#include "graspforge/error.hpp"
#include "graspforge/geom.hpp"

#include <nlohmann/json.hpp>

#include <initializer_list>
#include <string>

namespace graspforge::detail {

inline void expect_object(const nlohmann::json& j, const std::string& path,
                          std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw SchemaError("'" + path + "' must be an object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* k : allowed) known = known || item.key() == k;
    if (!known) throw SchemaError("unknown field '" + (path.empty() ? "" : path + ".") + item.key() + "'");
  }
}

inline const nlohmann::json& field(const nlohmann::json& j, const std::string& path, const char* key) {
  const auto it = j.find(key);
  if (it == j.end()) throw SchemaError("missing field '" + (path.empty() ? "" : path + ".") + key + "'");
  return *it;
}

template <class T>
T read(const nlohmann::json& j, const std::string& path, const char* key) {
  const auto& v = field(j, path, key);
  try {
    return v.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw SchemaError("field '" + (path.empty() ? "" : path + ".") + key + "' has the wrong type");
  }
}

inline Vec3 read_vec3(const nlohmann::json& j, const std::string& path, const char* key) {
  const auto& v = field(j, path, key);
  const std::string name = (path.empty() ? "" : path + ".") + key;
  if (!v.is_array() || v.size() != 3) throw SchemaError("field '" + name + "' must be a 3-vector");
  Vec3 out;
  for (int i = 0; i < 3; ++i) {
    if (!v[i].is_number()) throw SchemaError("field '" + name + "' must be numeric");
    out(i) = v[i].get<double>();
  }
  return out;
}

inline Mat3 read_mat3(const nlohmann::json& j, const std::string& path, const char* key) {
  const auto& v = field(j, path, key);
  const std::string name = (path.empty() ? "" : path + ".") + key;
  if (!v.is_array() || v.size() != 3) throw SchemaError("field '" + name + "' must be 3x3");
  Mat3 out;
  for (int r = 0; r < 3; ++r) {
    if (!v[r].is_array() || v[r].size() != 3) throw SchemaError("field '" + name + "' must be 3x3");
    for (int c = 0; c < 3; ++c) {
      if (!v[r][c].is_number()) throw SchemaError("field '" + name + "' must be numeric");
      out(r, c) = v[r][c].get<double>();
    }
  }
  return out;
}

inline nlohmann::json vec3_json(const Vec3& v) { return nlohmann::json::array({v.x(), v.y(), v.z()}); }

inline nlohmann::json mat3_json(const Mat3& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (int r = 0; r < 3; ++r) rows.push_back({m(r, 0), m(r, 1), m(r, 2)});
  return rows;
}

inline void check_schema(const nlohmann::json& j, const std::string& expected) {
  const auto s = read<std::string>(j, "", "schema");
  if (s != expected) throw VersionError("expected schema '" + expected + "', found '" + s + "'");
}

}  // namespace graspforge::detail

#pragma once

#include <filesystem>
#include <initializer_list>
#include <string>

#include "adi/adimage.hpp"
#include "adi/errors.hpp"
#include "json.hpp"

namespace adi::detail {

using nlohmann::json;

/// Rejects keys outside `allowed` so that typos in config files surface.
inline void require_known_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& what) {
  if (!j.is_object()) throw ConfigError(what + ": expected a JSON object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError(what + ": unknown key \"" + key + "\"");
  }
}

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end()) out = it->get<T>();
}

json parse_json_file(const std::filesystem::path& path);

json annotation_to_json(const image::Annotation& a);
image::Annotation annotation_from_json(const json& j);

}  // namespace adi::detail

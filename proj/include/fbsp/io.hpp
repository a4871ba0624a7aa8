#pragma once

#include <filesystem>
#include <initializer_list>
#include <string>
#include <string_view>

#include <json.hpp>

#include "fbsp/error.hpp"

namespace fbsp {

/// Fixed 17-significant-digit decimal, "inf"/"-inf"/"nan" for non-finite.
std::string format_real(double value);

/// Throws ValidationError naming the first key of `j` not in `allowed`.
void reject_unknown_keys(const nlohmann::json& j,
                         std::initializer_list<std::string_view> allowed,
                         std::string_view where);

template <typename T>
T require(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) {
    throw ValidationError(std::string("missing required key '") + key + "'");
  }
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad value for '") + key + "': " + e.what());
  }
}

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);
nlohmann::json read_json(const std::filesystem::path& path);

/// Writes `<path>.json` next to an output file.
void write_sidecar(const std::filesystem::path& output, const nlohmann::json& config);

}  // namespace fbsp

#pragma once

// nlohmann/json glue shared by the core sources. Not installed.

#include <optional>
#include <type_traits>

#include <json.hpp>

#include "velocity/domain.hpp"

namespace velocity::detail {

using Json = nlohmann::ordered_json;

Json to_json(const Post& post);
Json to_json(const User& user);
Json to_json(const DeletionRecord& record);

Post post_from(const Json& j);
User user_from(const Json& j);
DeletionRecord deletion_from(const Json& j);

Json parse(std::string_view text);

// Reads a required field, naming it in the error.
template <class T>
T field(const Json& j, const char* name) {
  auto it = j.find(name);
  if (it == j.end()) throw ValidationError(std::string("missing field '") + name + "'");
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ValidationError(std::string("field '") + name + "' has the wrong type");
  }
}

template <class T>
struct is_optional : std::false_type {};
template <class T>
struct is_optional<std::optional<T>> : std::true_type {};

template <class T>
T field_or(const Json& j, const char* name, T fallback) {
  auto it = j.find(name);
  if (it == j.end() || it->is_null()) return fallback;
  try {
    if constexpr (is_optional<T>::value) {
      return it->get<typename T::value_type>();
    } else {
      return it->get<T>();
    }
  } catch (const nlohmann::json::exception&) {
    throw ValidationError(std::string("field '") + name + "' has the wrong type");
  }
}

}  // namespace velocity::detail

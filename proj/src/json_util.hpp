#pragma once

#include "lmr/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <initializer_list>
#include <string>
#include <string_view>

namespace lmr::detail {

using json = nlohmann::json;

inline void check_keys(const json& j, std::initializer_list<std::string_view> allowed,
                       std::string_view where) {
  if (!j.is_object()) throw ValidationError(std::string(where) + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
      throw ValidationError(std::string(where) + ": unknown key '" + it.key() + "'");
}

template <typename T>
void get_to(const json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end()) {
    try {
      out = it->get<T>();
    } catch (const json::exception& e) {
      throw ValidationError(std::string("bad value for '") + key + "': " + e.what());
    }
  }
}

}  // namespace lmr::detail

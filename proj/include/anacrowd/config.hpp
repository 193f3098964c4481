#pragma once

// Strict JSON config reading: absent keys keep their defaults, unknown keys
// and type mismatches are configuration errors.

#include <set>
#include <string>

#include "anacrowd/corpus_io.hpp"
#include "anacrowd/errors.hpp"

namespace anacrowd {

class ConfigReader {
 public:
  ConfigReader(const Json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  template <class T>
  ConfigReader& get(const char* key, T& into) {
    seen_.insert(key);
    if (!j_.contains(key)) return *this;
    const Json& v = j_.at(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError("");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw ConfigError("");
        if constexpr (std::is_unsigned_v<T>) {
          if (v.is_number_unsigned() == false && v.get<long long>() < 0) throw ConfigError("");
        }
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ConfigError("");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError("");
      }
      into = v.get<T>();
    } catch (const std::exception&) {
      throw ConfigError(where_ + "." + key + ": wrong type " + v.dump());
    }
    return *this;
  }

  // Calls `fn(reader)` on the nested object at `key`, if present.
  template <class Fn>
  ConfigReader& nested(const char* key, Fn&& fn) {
    seen_.insert(key);
    if (!j_.contains(key)) return *this;
    ConfigReader sub(j_.at(key), where_ + "." + key);
    fn(sub);
    sub.finish();
    return *this;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError(where_ + ": unknown key '" + k + "'");
    }
  }

 private:
  const Json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

}  // namespace anacrowd

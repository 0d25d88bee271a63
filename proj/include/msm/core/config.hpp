#pragma once

#include <set>
#include <string>

#include <json.hpp>

#include "msm/core/error.hpp"

namespace msm {

/// Reads optional fields from a JSON object and rejects keys nobody asked
/// for. Errors carry the dotted field path and ErrorKind::config.
class ConfigReader {
 public:
  ConfigReader(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(ErrorKind::config, where() + " must be an object");
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception&) {
      fail(ErrorKind::config, field(key) + " has the wrong type");
    }
  }

  /// Nested object reader (an empty object when absent).
  ConfigReader section(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    static const nlohmann::json empty = nlohmann::json::object();
    return ConfigReader(it == j_.end() ? empty : *it, field(key));
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) fail(ErrorKind::config, "unknown key " + field(it.key()));
    }
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  void check(bool cond, const std::string& key, const std::string& what) const {
    if (!cond) fail(ErrorKind::config, field(key) + " " + what);
  }

 private:
  std::string where() const { return path_.empty() ? "config" : path_; }

  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace msm

#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "msm/nn/autograd.hpp"

namespace msm::nn {

inline constexpr int kCheckpointSchemaVersion = 1;

/// Directory checkpoint: manifest.json {schema_version, kind, config, stats,
/// tensors: {name: {file, shape}}} plus one float32 blob per named tensor.
struct Checkpoint {
  std::string kind;
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json stats = nlohmann::json::object();
  std::map<std::string, Matrix> tensors;

  void put(const std::string& name, const Matrix& m) { tensors[name] = m; }
  const Matrix& get(const std::string& name) const;
  bool has(const std::string& name) const { return tensors.count(name) != 0; }

  void put_params(const std::vector<Parameter*>& params);
  /// Copies stored values into `params`, checking names and shapes.
  void load_params(const std::vector<Parameter*>& params) const;
};

/// Writes into `dir.tmp` and renames over `dir` once complete.
void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& dir, const std::string& expected_kind = "");

}  // namespace msm::nn

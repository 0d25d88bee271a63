#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "msm/data/prompt.hpp"
#include "msm/eval/metrics.hpp"
#include "msm/eval/tmr.hpp"
#include "msm/segment/segmenter.hpp"
#include "msm/t2m/model.hpp"
#include "msm/t2m/train.hpp"
#include "msm/vq/model.hpp"
#include "msm/vq/train.hpp"

namespace msm::cli {

struct DataConfig {
  std::string root = "data";
  bool mirror = false;
  std::string text_source = "toy";  // toy | precomputed
  std::string text_features;        // directory of <caption_id>.tensor when precomputed
  double val_ratio = 0.05;
  double test_ratio = 0.10;

  void read(ConfigReader& r);
  nlohmann::json to_json() const;
};

struct SamplingConfig {
  int iterations = 10;
  double cfg_scale = 5.0;
  double temperature = 1.0;
  double default_seconds = 8.0;  // when neither --frames nor a rewrite gives a length

  void read(ConfigReader& r);
  nlohmann::json to_json() const;
  t2m::SamplerOptions options() const { return {iterations, cfg_scale, temperature, false}; }
};

struct EvalSection {
  eval::TmrConfig model;
  eval::TmrTrainConfig train;
  std::string split = "test";
  int pool_size = 32;
  int top_k = 3;
  int repeats = eval::kMetricRepeats;
  int diversity_pairs = 300;
  int mmodality_pairs = 10;

  void read(ConfigReader& r);
  nlohmann::json to_json() const;
};

/// Whole-run configuration. The file is JSON with the sections below; every
/// key is optional and unknown keys are rejected with their dotted path.
///
///   {seed, threads,
///    data: {root, mirror, text_source, text_features, val_ratio, test_ratio},
///    vq: {model: {...}, train: {...}},
///    t2m: {model: {...}, train: {...}},
///    eval: {model: {...}, train: {...}, split, pool_size, top_k, repeats,
///           diversity_pairs, mmodality_pairs},
///    sampling: {iterations, cfg_scale, temperature, default_seconds},
///    segmenter: {sigma, accept_scale, min_len_s, max_len_s, rng_seed},
///    llm: {offline, endpoint, model, api_key_env, timeout_s, max_retries,
///          max_concurrency, template}}
///
/// The top-level seed drives every random choice; training sections may not
/// carry their own.
struct RunConfig {
  std::uint64_t seed = 0;
  int threads = 0;
  DataConfig data;
  vq::VqConfig vq;
  vq::VqTrainConfig vq_train;
  t2m::T2mConfig t2m;
  t2m::T2mTrainConfig t2m_train;
  EvalSection eval;
  SamplingConfig sampling;
  segment::SegmentationParams segmenter;
  data::LlmConfig llm;

  static RunConfig from_json(const nlohmann::json& j);
  /// Effective configuration with every default filled in.
  nlohmann::json to_json() const;
  /// SHA-1 of the canonical effective configuration (threads excluded).
  std::string hash() const;
};

/// Applies "dotted.path=value" onto `j`. The value is parsed as JSON when it
/// can be, otherwise taken as a string.
void apply_override(nlohmann::json& j, const std::string& assignment);

/// Reads `path` (when given), applies overrides in order and validates.
RunConfig load_run_config(const std::optional<std::filesystem::path>& path,
                          const std::vector<std::string>& overrides);

}  // namespace msm::cli

#pragma once

#include <vector>

#include <json.hpp>

#include "msm/motion/features.hpp"
#include "msm/motion/normalization.hpp"
#include "msm/t2m/model.hpp"
#include "msm/vq/model.hpp"

namespace msm::t2m {

struct SamplerOptions {
  int iterations = 10;
  double cfg_scale = 5.0;
  double temperature = 1.0;
  bool record_history = false;  // keep the token state after every iteration

  static SamplerOptions from(const T2mConfig& c) { return {c.iterations, c.cfg_scale, c.temperature, false}; }
};

/// Masked positions remaining after each iteration.
struct SampleTrace {
  int tokens = 0;
  std::vector<int> masked_after;
  std::vector<std::vector<int>> history;
  nlohmann::json to_json() const;
};

struct SampleResult {
  FlatTokenSequence tokens;
  vq::QuantizedMotion quantized;
  SampleTrace trace;
};

/// Iterative parallel decoding from an all-MASK sequence laid out by
/// `schedule`. A null `text` samples unconditionally without guidance.
SampleResult sample_tokens(T2mModel& model, const Matrix* text, const vq::ScaleSchedule& schedule,
                           const SamplerOptions& opt, Rng& rng);

/// Latent lengths seen in training; generation clamps into this range.
struct LatentRange {
  int min = 1;
  int max = 1 << 30;
};

struct GenerateResult {
  motion::FeatureSequence features;  // denormalized
  SampleResult sample;
  int frames = 0;
};

GenerateResult generate(T2mModel& model, vq::VqModel& vq_model, const motion::NormalizationStats& norm,
                        const Matrix& text, int target_frames, const SamplerOptions& opt, Rng& rng,
                        const LatentRange& range = {}, double fps = 30.0);

}  // namespace msm::t2m

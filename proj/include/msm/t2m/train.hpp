#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "msm/core/config.hpp"
#include "msm/nn/optim.hpp"
#include "msm/t2m/model.hpp"
#include "msm/t2m/sampler.hpp"

namespace msm::t2m {

/// One (motion tokens, caption features) training pair.
struct T2mExample {
  FlatTokenSequence tokens;
  Matrix text;
  std::string caption_id;
};

struct T2mTrainConfig {
  int epochs = 100;
  int batch_size = 64;
  double lr = 2e-4;
  int warmup_steps = 0;
  std::vector<double> lr_milestones;
  double lr_gamma = 0.1;
  double clip_norm = 0.0;
  std::uint64_t seed = 0;

  void read(ConfigReader& r);
  nlohmann::json to_json() const;
};

struct T2mEpochLog {
  int epoch = 0;
  double loss = 0;  // mean masked cross-entropy, nats per token
};

struct T2mTrainReport {
  std::vector<T2mEpochLog> epochs;
  long steps = 0;
  LatentRange latent_range;
  nlohmann::json to_json() const;
};

using T2mEpochCallback = std::function<void(const T2mEpochLog&)>;

/// Corrupts each example at a uniform random progress and drops its caption
/// with the configured probability, then takes one optimizer step.
double training_step(T2mModel& model, const std::vector<const T2mExample*>& batch, nn::Adam& adam, Rng& rng);

T2mTrainReport train_t2m(T2mModel& model, const std::vector<T2mExample>& data, const T2mTrainConfig& cfg,
                         const T2mEpochCallback& on_epoch = {});

/// Latent lengths covered by `data` (the final scale length of each example).
LatentRange latent_range_of(const std::vector<T2mExample>& data);

}  // namespace msm::t2m

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "msm/nn/optim.hpp"
#include "msm/vq/model.hpp"

namespace msm::vq {

struct VqTrainConfig {
  int epochs = 50;
  int batch_size = 256;
  int window = 64;  // frames per training crop
  double lr = 2e-4;
  int warmup_steps = 0;
  std::vector<double> lr_milestones;  // fractions of training where lr drops
  double lr_gamma = 0.1;
  double clip_norm = 0.0;
  std::uint64_t seed = 0;

  void read(ConfigReader& r);
  nlohmann::json to_json() const;
};

struct VqEpochLog {
  int epoch = 0;
  double loss = 0;
  double reconstruction = 0;
  double commitment = 0;
  double essential = 0;
  double perplexity = 0;  // mean over codebooks
  int dead_codes_reset = 0;
};

struct VqTrainReport {
  std::vector<VqEpochLog> epochs;
  long steps = 0;
  nlohmann::json to_json() const;
};

using VqEpochCallback = std::function<void(const VqEpochLog&)>;

/// Trains on normalized clips. Each step draws `batch_size` random crops of
/// `window` frames (clips shorter than the window are used whole, cropped
/// to a multiple of the downscale factor).
VqTrainReport train_vq(VqModel& model, const std::vector<Matrix>& corpus, const VqTrainConfig& cfg,
                       const VqEpochCallback& on_epoch = {});

/// Mean squared reconstruction error per element over whole clips.
double reconstruction_mse(VqModel& model, const std::vector<Matrix>& corpus);

/// Entry v: mean squared error when decoding the sum of codes of layers 0..v.
std::vector<double> capacity_probe(VqModel& model, const std::vector<Matrix>& corpus);
std::string capacity_probe_csv(const std::vector<double>& curve, const ScaleSchedule& schedule);

}  // namespace msm::vq

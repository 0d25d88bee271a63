#pragma once

#include <vector>

#include "msm/nn/autograd.hpp"

namespace msm::nn {

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;
  double weight_decay = 0.0;
  double clip_norm = 0.0;  // 0 disables global-norm clipping
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  /// Applies one update to every parameter and clears their gradients.
  /// Returns the pre-clipping global gradient norm.
  double step(const std::vector<Parameter*>& params);
  void set_lr(double lr) { cfg_.lr = lr; }
  const AdamConfig& config() const { return cfg_; }
  long steps() const { return t_; }

 private:
  AdamConfig cfg_;
  long t_ = 0;
};

void zero_grad(const std::vector<Parameter*>& params);

/// Learning rate with linear warmup over `warmup_steps`, then multiplied by
/// `gamma` once for every milestone (a fraction of training) already passed.
struct LrSchedule {
  double base = 2e-4;
  int warmup_steps = 0;
  std::vector<double> milestones;
  double gamma = 0.1;

  double at(long step, double progress) const;
};

}  // namespace msm::nn

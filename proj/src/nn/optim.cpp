#include "msm/nn/optim.hpp"

#include <cmath>

#include "msm/core/error.hpp"

namespace msm::nn {

double Adam::step(const std::vector<Parameter*>& params) {
  double sq = 0.0;
  for (Parameter* p : params) {
    if (p->grad.size() == 0) p->zero_grad();
    sq += p->grad.squaredNorm();
  }
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) fail(ErrorKind::numeric, "non-finite gradient norm");
  const double clip = (cfg_.clip_norm > 0.0 && norm > cfg_.clip_norm) ? cfg_.clip_norm / norm : 1.0;

  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (Parameter* p : params) {
    if (p->adam_m.size() == 0) {
      p->adam_m = Matrix::Zero(p->value.rows(), p->value.cols());
      p->adam_v = Matrix::Zero(p->value.rows(), p->value.cols());
    }
    const Matrix g = p->grad * clip;
    p->adam_m = cfg_.beta1 * p->adam_m + (1.0 - cfg_.beta1) * g;
    p->adam_v = cfg_.beta2 * p->adam_v + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
    const Matrix update =
        (p->adam_m / bc1).array() / ((p->adam_v / bc2).array().sqrt() + cfg_.eps);
    if (cfg_.weight_decay > 0.0) p->value *= (1.0 - cfg_.lr * cfg_.weight_decay);
    p->value -= cfg_.lr * update;
    p->grad.setZero();
  }
  return norm;
}

void zero_grad(const std::vector<Parameter*>& params) {
  for (Parameter* p : params) p->zero_grad();
}

double LrSchedule::at(long step, double progress) const {
  if (warmup_steps > 0 && step < warmup_steps) return base * static_cast<double>(step + 1) / warmup_steps;
  double lr = base;
  for (double m : milestones)
    if (progress >= m) lr *= gamma;
  return lr;
}

}  // namespace msm::nn

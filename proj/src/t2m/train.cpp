#include "msm/t2m/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "msm/core/error.hpp"

namespace msm::t2m {

void T2mTrainConfig::read(ConfigReader& r) {
  r.get("epochs", epochs);
  r.get("batch_size", batch_size);
  r.get("lr", lr);
  r.get("warmup_steps", warmup_steps);
  r.get("lr_milestones", lr_milestones);
  r.get("lr_gamma", lr_gamma);
  r.get("clip_norm", clip_norm);
  r.get("seed", seed);
  r.check(epochs >= 0, "epochs", "must be >= 0");
  r.check(batch_size >= 1, "batch_size", "must be >= 1");
  r.check(lr > 0, "lr", "must be positive");
  for (double m : lr_milestones) r.check(m > 0 && m < 1, "lr_milestones", "entries must lie in (0, 1)");
  r.check(lr_gamma > 0 && lr_gamma <= 1, "lr_gamma", "must lie in (0, 1]");
}

nlohmann::json T2mTrainConfig::to_json() const {
  return {{"epochs", epochs},   {"batch_size", batch_size},       {"lr", lr},
          {"warmup_steps", warmup_steps}, {"lr_milestones", lr_milestones}, {"lr_gamma", lr_gamma},
          {"clip_norm", clip_norm}, {"seed", seed}};
}

nlohmann::json T2mTrainReport::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& e : epochs) rows.push_back({{"epoch", e.epoch}, {"loss", e.loss}});
  return {{"steps", steps}, {"epochs", rows}, {"latent_min", latent_range.min}, {"latent_max", latent_range.max}};
}

LatentRange latent_range_of(const std::vector<T2mExample>& data) {
  LatentRange r{1 << 30, 0};
  for (const auto& ex : data) {
    int n = 0;
    for (std::size_t i = 0; i < ex.tokens.tokens.size(); ++i)
      if (ex.tokens.scale_ids[i] == ex.tokens.scale_ids.back()) ++n;
    r.min = std::min(r.min, n);
    r.max = std::max(r.max, n);
  }
  if (data.empty()) r = LatentRange{};
  return r;
}

double training_step(T2mModel& model, const std::vector<const T2mExample*>& batch, nn::Adam& adam, Rng& rng) {
  const auto& cfg = model.config();
  std::vector<Corruption> corrupted;
  std::vector<const Matrix*> texts;
  for (const auto* ex : batch) {
    corrupted.push_back(corrupt_for_training(ex->tokens, rng.uniform(), cfg.codebook_size, rng));
    texts.push_back(rng.uniform() < cfg.cfg_dropout ? nullptr : &ex->text);
  }
  nn::Context ctx{true, &rng};
  const nn::Var loss = model.masked_loss(corrupted, texts, ctx);
  const double value = loss.item();
  if (!std::isfinite(value)) fail(ErrorKind::numeric, "masked-token loss is not finite");
  auto params = model.parameters();
  nn::backward(loss);
  adam.step(params);
  return value;
}

T2mTrainReport train_t2m(T2mModel& model, const std::vector<T2mExample>& data, const T2mTrainConfig& cfg,
                         const T2mEpochCallback& on_epoch) {
  require(!data.empty(), "t2m training set is empty", ErrorKind::data_validation);
  for (const auto& ex : data) {
    require(ex.text.cols() == model.config().text_dim, "caption '" + ex.caption_id + "' has the wrong text width",
            ErrorKind::data_validation);
    for (int t : ex.tokens.tokens)
      require(t >= 0 && t < model.config().codebook_size, "training tokens must be codebook indices",
              ErrorKind::data_validation);
  }
  Rng rng(cfg.seed);
  nn::AdamConfig ac;
  ac.lr = cfg.lr;
  ac.clip_norm = cfg.clip_norm;
  nn::Adam adam(ac);
  const nn::LrSchedule lr_plan{cfg.lr, cfg.warmup_steps, cfg.lr_milestones, cfg.lr_gamma};

  T2mTrainReport report;
  report.latent_range = latent_range_of(data);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double total = 0;
    int batches = 0;
    for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(cfg.batch_size)) {
      std::vector<const T2mExample*> batch;
      for (std::size_t i = at; i < std::min(order.size(), at + cfg.batch_size); ++i) batch.push_back(&data[order[i]]);
      adam.set_lr(lr_plan.at(report.steps, static_cast<double>(epoch) / cfg.epochs));
      total += training_step(model, batch, adam, rng);
      ++batches;
      ++report.steps;
    }
    T2mEpochLog row{epoch, total / batches};
    report.epochs.push_back(row);
    if (on_epoch) on_epoch(row);
  }
  return report;
}

}  // namespace msm::t2m

#include "msm/vq/train.hpp"

#include <cmath>
#include <map>
#include <sstream>

#include "msm/core/error.hpp"
#include "msm/core/log.hpp"

namespace msm::vq {

void VqTrainConfig::read(ConfigReader& r) {
  r.get("epochs", epochs);
  r.get("batch_size", batch_size);
  r.get("window", window);
  r.get("lr", lr);
  r.get("warmup_steps", warmup_steps);
  r.get("lr_milestones", lr_milestones);
  r.get("lr_gamma", lr_gamma);
  r.get("clip_norm", clip_norm);
  r.get("seed", seed);
  r.check(epochs >= 0, "epochs", "must be >= 0");
  r.check(batch_size >= 1, "batch_size", "must be >= 1");
  r.check(window >= 1, "window", "must be >= 1");
  r.check(lr > 0, "lr", "must be positive");
  for (double m : lr_milestones) r.check(m > 0 && m < 1, "lr_milestones", "entries must lie in (0, 1)");
  r.check(lr_gamma > 0 && lr_gamma <= 1, "lr_gamma", "must lie in (0, 1]");
}

nlohmann::json VqTrainConfig::to_json() const {
  return {{"epochs", epochs}, {"batch_size", batch_size}, {"window", window}, {"lr", lr},
          {"warmup_steps", warmup_steps}, {"lr_milestones", lr_milestones}, {"lr_gamma", lr_gamma},
          {"clip_norm", clip_norm}, {"seed", seed}};
}

nlohmann::json VqTrainReport::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& e : epochs) {
    rows.push_back({{"epoch", e.epoch},
                    {"loss", e.loss},
                    {"reconstruction", e.reconstruction},
                    {"commitment", e.commitment},
                    {"essential", e.essential},
                    {"perplexity", e.perplexity},
                    {"dead_codes_reset", e.dead_codes_reset}});
  }
  return {{"steps", steps}, {"epochs", rows}};
}

namespace {

Matrix crop(const Matrix& clip, int window, int multiple, Rng& rng) {
  const int N = static_cast<int>(clip.rows());
  if (N <= window) {
    const int len = (N / multiple) * multiple;
    require(len >= multiple, "clip too short");
    return clip.topRows(len);
  }
  const int start = static_cast<int>(rng.below(static_cast<std::uint64_t>(N - window + 1)));
  return clip.middleRows(start, window);
}

}  // namespace

VqTrainReport train_vq(VqModel& model, const std::vector<Matrix>& corpus, const VqTrainConfig& cfg,
                       const VqEpochCallback& on_epoch) {
  require(!corpus.empty(), "training corpus is empty", ErrorKind::data_validation);
  const VqConfig& mc = model.config();
  require(cfg.window % mc.downscale == 0, "vq_train.window must be a multiple of the downscale factor",
          ErrorKind::config);
  for (const auto& c : corpus) {
    require(c.cols() == mc.input_dim, "training clip width does not match the model", ErrorKind::data_validation);
    require(c.allFinite(), "training clip contains non-finite values", ErrorKind::data_validation);
  }
  Rng rng(cfg.seed);
  nn::AdamConfig ac;
  ac.lr = cfg.lr;
  ac.clip_norm = cfg.clip_norm;
  nn::Adam adam(ac);
  auto params = model.parameters();
  const nn::LrSchedule lr_plan{cfg.lr, cfg.warmup_steps, cfg.lr_milestones, cfg.lr_gamma};

  const int steps_per_epoch = std::max<int>(1, static_cast<int>(corpus.size()) / cfg.batch_size);
  VqTrainReport report;
  auto draw_batch = [&]() {
    std::vector<Matrix> batch;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const auto& clip = corpus[rng.below(corpus.size())];
      batch.push_back(crop(clip, cfg.window, mc.downscale, rng));
    }
    return batch;
  };

  {
    auto first = draw_batch();
    model.initialize_codebooks(first, rng);
  }

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    VqEpochLog log_row;
    log_row.epoch = epoch;
    for (int b = 0; b < model.codebook_count(); ++b) model.codebook(b).clear_usage();
    int reset_total = 0;
    for (int s = 0; s < steps_per_epoch; ++s) {
      const auto batch = draw_batch();
      adam.set_lr(lr_plan.at(report.steps, static_cast<double>(epoch) / cfg.epochs));
      // Assignments per codebook, applied after the gradient step.
      std::vector<std::vector<int>> assign(static_cast<std::size_t>(model.codebook_count()));
      std::vector<std::vector<RowVector>> vecs(static_cast<std::size_t>(model.codebook_count()));
      // Clips shorter than the window form their own groups of equal length.
      std::map<Eigen::Index, std::vector<Matrix>> groups;
      for (const auto& clip : batch) groups[clip.rows()].push_back(clip);
      nn::Var total;
      double rec = 0, com = 0, ess = 0;
      for (const auto& [len, clips] : groups) {
        VqLosses l = model.loss(clips);
        const double w = static_cast<double>(clips.size()) / batch.size();
        const nn::Var part = nn::scale(l.total, w);
        total = total ? nn::add(total, part) : part;
        rec += w * l.reconstruction;
        com += w * l.commitment;
        ess += w * l.essential;
        for (const auto& q : l.quantized) {
          for (int v = 0; v < q.tokens.schedule.layers(); ++v) {
            const std::size_t book = model.codebook_count() == 1 ? 0 : static_cast<std::size_t>(v);
            for (std::size_t i = 0; i < q.tokens.token_seqs[v].size(); ++i) {
              assign[book].push_back(q.tokens.token_seqs[v][i]);
              vecs[book].push_back(q.layer_inputs[v].row(static_cast<Eigen::Index>(i)));
            }
          }
        }
      }
      if (!std::isfinite(total.item())) {
        fail(ErrorKind::numeric, "non-finite VQ loss at step " + std::to_string(report.steps) + " (reconstruction " +
                                     std::to_string(rec) + ", commitment " +
                                     std::to_string(com) + ")");
      }
      nn::backward(total);
      adam.step(params);
      ++report.steps;
      for (int b = 0; b < model.codebook_count(); ++b) {
        Matrix v(static_cast<Eigen::Index>(vecs[b].size()), mc.latent_dim);
        for (std::size_t i = 0; i < vecs[b].size(); ++i) v.row(static_cast<Eigen::Index>(i)) = vecs[b][i];
        model.codebook(b).ema_update(assign[b], v);
        if (mc.reset_window > 0 && report.steps % mc.reset_window == 0) {
          log_row.perplexity += model.codebook(b).perplexity();
          reset_total += model.codebook(b).reset_dead_codes(v, rng);
        }
      }
      log_row.loss += total.item();
      log_row.reconstruction += rec;
      log_row.commitment += com;
      log_row.essential += ess;
    }
    log_row.loss /= steps_per_epoch;
    log_row.reconstruction /= steps_per_epoch;
    log_row.commitment /= steps_per_epoch;
    log_row.essential /= steps_per_epoch;
    double ppl = 0;
    for (int b = 0; b < model.codebook_count(); ++b) ppl += model.codebook(b).perplexity();
    // Usage is cleared at resets, so fall back to the value sampled there.
    log_row.perplexity = ppl > 0 ? ppl / model.codebook_count() : log_row.perplexity / model.codebook_count();
    log_row.dead_codes_reset = reset_total;
    report.epochs.push_back(log_row);
    if (on_epoch) on_epoch(log_row);
  }
  return report;
}

double reconstruction_mse(VqModel& model, const std::vector<Matrix>& corpus) {
  require(!corpus.empty(), "evaluation corpus is empty");
  double se = 0, count = 0;
  for (const auto& clip : corpus) {
    const Matrix r = model.reconstruct(clip);
    se += (r - clip).squaredNorm();
    count += static_cast<double>(clip.size());
  }
  return se / count;
}

std::vector<double> capacity_probe(VqModel& model, const std::vector<Matrix>& corpus) {
  require(!corpus.empty(), "probe corpus is empty");
  const int layers = model.config().extra_layers + 1;
  std::vector<double> se(static_cast<std::size_t>(layers), 0.0);
  double count = 0;
  for (const auto& clip : corpus) {
    const auto q = model.quantize_latent(model.encode(clip));
    for (int v = 0; v < layers; ++v) {
      const Matrix r = model.decode_tokens(q.tokens, static_cast<int>(clip.rows()), v);
      se[v] += (r - clip).squaredNorm();
    }
    count += static_cast<double>(clip.size());
  }
  for (double& s : se) s /= count;
  return se;
}

std::string capacity_probe_csv(const std::vector<double>& curve, const ScaleSchedule& schedule) {
  std::ostringstream os;
  os << "layer,scale_length,cumulative_tokens,mse\n";
  int tokens = 0;
  for (std::size_t v = 0; v < curve.size(); ++v) {
    tokens += schedule.lengths[v];
    os << v << "," << schedule.lengths[v] << "," << tokens << "," << curve[v] << "\n";
  }
  return os.str();
}

}  // namespace msm::vq

#include "msm/eval/tmr.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "msm/core/error.hpp"
#include "msm/nn/checkpoint.hpp"
#include "msm/nn/optim.hpp"

namespace msm::eval {

using nn::Var;

void TmrConfig::validate() const {
  require(layers >= 1 && latent >= 1 && heads >= 1 && ff >= 1, "tmr dimensions must be positive",
          ErrorKind::config);
  require(latent % heads == 0, "tmr.latent must be divisible by tmr.heads", ErrorKind::config);
  require(motion_dim >= 1 && text_dim >= 1, "tmr input widths must be positive", ErrorKind::config);
  require(dropout >= 0 && dropout < 1, "tmr.dropout must lie in [0, 1)", ErrorKind::config);
  require(lambda_e >= 0 && lambda_kl >= 0 && lambda_nce >= 0, "tmr loss weights must be >= 0", ErrorKind::config);
  require(temperature > 0, "tmr.temperature must be positive", ErrorKind::config);
}

nlohmann::json TmrConfig::to_json() const {
  return {{"layers", layers},       {"latent", latent},       {"heads", heads},
          {"ff", ff},               {"dropout", dropout},     {"motion_dim", motion_dim},
          {"text_dim", text_dim},   {"lambda_e", lambda_e},   {"lambda_kl", lambda_kl},
          {"lambda_nce", lambda_nce}, {"temperature", temperature}};
}

void TmrConfig::read(ConfigReader& r) {
  r.get("layers", layers);
  r.get("latent", latent);
  r.get("heads", heads);
  r.get("ff", ff);
  r.get("dropout", dropout);
  r.get("motion_dim", motion_dim);
  r.get("text_dim", text_dim);
  r.get("lambda_e", lambda_e);
  r.get("lambda_kl", lambda_kl);
  r.get("lambda_nce", lambda_nce);
  r.get("temperature", temperature);
  r.finish();
  validate();
}

TmrConfig TmrConfig::from_json(const nlohmann::json& j) {
  TmrConfig c;
  ConfigReader r(j, "tmr");
  c.read(r);
  return c;
}

DistributionEncoder::DistributionEncoder(const std::string& name, int in_dim, const TmrConfig& cfg, Rng& rng)
    : in_dim_(in_dim), width_(cfg.latent) {
  proj_ = nn::Linear(name + ".proj", in_dim, cfg.latent, rng);
  readout_ = nn::Parameter(name + ".readout", nn::normal_init(2, cfg.latent, 0.02, rng));
  for (int l = 0; l < cfg.layers; ++l)
    layers_.emplace_back(name + ".layer" + std::to_string(l), cfg.latent, cfg.heads, cfg.ff, cfg.dropout, false,
                         rng);
  norm_ = nn::LayerNorm(name + ".norm", cfg.latent);
}

std::pair<Var, Var> DistributionEncoder::forward(const std::vector<const Matrix*>& seqs, const nn::Context& ctx) {
  require(!seqs.empty(), "encoder batch is empty");
  const int B = static_cast<int>(seqs.size());
  int t_max = 0;
  for (const auto* s : seqs) {
    if (s->cols() != in_dim_)
      fail(ErrorKind::invalid_argument, "encoder input width " + std::to_string(s->cols()) + " does not match " +
                                            std::to_string(in_dim_));
    require(s->rows() >= 1, "encoder input is empty");
    t_max = std::max(t_max, static_cast<int>(s->rows()));
  }
  Matrix raw = Matrix::Zero(B * t_max, in_dim_);
  Matrix pos(B * t_max, width_);
  const Matrix pe = nn::sinusoidal_positions(t_max, width_);
  for (int b = 0; b < B; ++b) {
    raw.middleRows(b * t_max, seqs[b]->rows()) = *seqs[b];
    pos.middleRows(b * t_max, t_max) = pe;
  }
  const Var x = nn::add(proj_.forward(nn::constant(raw)), nn::constant(pos));
  const Var tokens = nn::param(readout_);
  const int L = t_max + 2;
  std::vector<Var> parts;
  std::vector<char> valid;
  for (int b = 0; b < B; ++b) {
    parts.push_back(tokens);
    parts.push_back(nn::slice_rows(x, b * t_max, t_max));
    valid.push_back(1);
    valid.push_back(1);
    for (int t = 0; t < t_max; ++t) valid.push_back(t < seqs[b]->rows() ? 1 : 0);
  }
  Var h = nn::concat_rows(parts);
  for (auto& layer : layers_) h = layer.forward(h, valid, ctx, {}, {}, B);
  h = norm_.forward(h);
  std::vector<int> mu_rows, lv_rows;
  for (int b = 0; b < B; ++b) {
    mu_rows.push_back(b * L);
    lv_rows.push_back(b * L + 1);
  }
  return {nn::gather_rows(h, mu_rows), nn::gather_rows(h, lv_rows)};
}

void DistributionEncoder::visit(const nn::ParamVisitor& f) {
  proj_.visit(f);
  f(readout_);
  for (auto& l : layers_) l.visit(f);
  norm_.visit(f);
}

TmrModel::TmrModel(const TmrConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  motion_enc_ = DistributionEncoder("motion_enc", cfg_.motion_dim, cfg_, rng);
  text_enc_ = DistributionEncoder("text_enc", cfg_.text_dim, cfg_, rng);
  for (int l = 0; l < cfg_.layers; ++l)
    dec_layers_.emplace_back("dec.layer" + std::to_string(l), cfg_.latent, cfg_.heads, cfg_.ff, cfg_.dropout, false,
                             rng);
  dec_norm_ = nn::LayerNorm("dec.norm", cfg_.latent);
  dec_out_ = nn::Linear("dec.out", cfg_.latent, cfg_.motion_dim, rng);
}

std::vector<nn::Parameter*> TmrModel::parameters() {
  std::vector<nn::Parameter*> out;
  auto add = [&](nn::Parameter& p) { out.push_back(&p); };
  motion_enc_.visit(add);
  text_enc_.visit(add);
  for (auto& l : dec_layers_) l.visit(add);
  dec_norm_.visit(add);
  dec_out_.visit(add);
  return out;
}

std::pair<Var, Var> TmrModel::encode_motion(const std::vector<const Matrix*>& motions, const nn::Context& ctx) {
  return motion_enc_.forward(motions, ctx);
}

std::pair<Var, Var> TmrModel::encode_text(const std::vector<const Matrix*>& texts, const nn::Context& ctx) {
  return text_enc_.forward(texts, ctx);
}

Var TmrModel::decode(const Var& z, int frames, const nn::Context& ctx) {
  require(frames >= 1, "decoder needs at least one frame");
  const int B = static_cast<int>(z.rows());
  std::vector<int> tile;
  Matrix pos(B * frames, cfg_.latent);
  const Matrix pe = nn::sinusoidal_positions(frames, cfg_.latent);
  for (int b = 0; b < B; ++b) {
    pos.middleRows(b * frames, frames) = pe;
    for (int t = 0; t < frames; ++t) tile.push_back(b);
  }
  Var h = nn::add(nn::gather_rows(z, tile), nn::constant(pos));
  for (auto& layer : dec_layers_) h = layer.forward(h, {}, ctx, {}, {}, B);
  return dec_out_.forward(dec_norm_.forward(h));
}

EvalEmbedding TmrModel::embed_motion(const Matrix& essential) {
  auto [mu, lv] = encode_motion({&essential});
  EvalEmbedding e{mu.value().row(0), lv.value().row(0), Modality::motion};
  require(e.mean.allFinite() && e.log_var.allFinite(), "motion embedding is not finite", ErrorKind::numeric);
  return e;
}

EvalEmbedding TmrModel::embed_text(const Matrix& text) {
  auto [mu, lv] = encode_text({&text});
  EvalEmbedding e{mu.value().row(0), lv.value().row(0), Modality::text};
  require(e.mean.allFinite() && e.log_var.allFinite(), "text embedding is not finite", ErrorKind::numeric);
  return e;
}

std::vector<EvalEmbedding> TmrModel::embed_motions(const std::vector<Matrix>& clips, int batch) {
  std::vector<EvalEmbedding> out;
  for (std::size_t at = 0; at < clips.size(); at += static_cast<std::size_t>(batch)) {
    std::vector<const Matrix*> ptrs;
    for (std::size_t i = at; i < std::min(clips.size(), at + batch); ++i) ptrs.push_back(&clips[i]);
    auto [mu, lv] = encode_motion(ptrs);
    for (Eigen::Index r = 0; r < mu.rows(); ++r) {
      EvalEmbedding e{mu.value().row(r), lv.value().row(r), Modality::motion};
      require(e.mean.allFinite() && e.log_var.allFinite(), "motion embedding is not finite", ErrorKind::numeric);
      out.push_back(std::move(e));
    }
  }
  return out;
}

namespace {

// KL(N(mu, exp(lv)) || N(0, I)), averaged over entries.
Var kl_to_unit(const Var& mu, const Var& lv) {
  return nn::scale(nn::mean(nn::sub(nn::add(nn::exp(lv), nn::square(mu)), nn::add_scalar(lv, 1.0))), 0.5);
}

// KL(p || q) for diagonal Gaussians, averaged over entries.
Var kl_between(const Var& mu_p, const Var& lv_p, const Var& mu_q, const Var& lv_q) {
  const Var ratio = nn::mul(nn::add(nn::exp(lv_p), nn::square(nn::sub(mu_p, mu_q))), nn::exp(nn::scale(lv_q, -1.0)));
  return nn::scale(nn::mean(nn::add_scalar(nn::add(nn::sub(lv_q, lv_p), ratio), -1.0)), 0.5);
}

Var sample_latent(const Var& mu, const Var& lv, const nn::Context& ctx) {
  if (!ctx.training || !ctx.rng) return mu;
  Matrix eps(mu.rows(), mu.cols());
  for (Eigen::Index i = 0; i < eps.size(); ++i) eps.data()[i] = ctx.rng->normal();
  return nn::add(mu, nn::mul(nn::exp(nn::scale(lv, 0.5)), nn::constant(eps)));
}

}  // namespace

TmrLosses TmrModel::loss(const std::vector<const Matrix*>& motions, const std::vector<const Matrix*>& texts,
                         const std::vector<int>& groups, const nn::Context& ctx) {
  require(!motions.empty(), "tmr loss needs at least one motion");
  const int B = static_cast<int>(motions.size());
  const int T = static_cast<int>(motions[0]->rows());
  for (const auto* m : motions) require(m->rows() == T, "tmr loss needs equal-length motions");
  Matrix target(B * T, cfg_.motion_dim);
  for (int b = 0; b < B; ++b) target.middleRows(b * T, T) = *motions[b];
  const Var tgt = nn::constant(target);

  TmrLosses out;
  auto [mu_m, lv_m] = encode_motion(motions, ctx);
  if (texts.empty()) {
    const Var rec = nn::smooth_l1(decode(sample_latent(mu_m, lv_m, ctx), T, ctx), tgt);
    const Var kl = kl_to_unit(mu_m, lv_m);
    out.reconstruction = rec.item();
    out.kl = kl.item();
    out.total = nn::add(rec, nn::scale(kl, cfg_.lambda_kl));
    return out;
  }
  require(static_cast<int>(texts.size()) == B, "tmr loss needs one text per motion");
  if (B < 2) fail(ErrorKind::invalid_argument, "contrastive loss needs a batch of at least 2");
  require(groups.empty() || static_cast<int>(groups.size()) == B, "tmr loss needs one group id per pair");
  auto [mu_t, lv_t] = encode_text(texts, ctx);

  const Var z = nn::concat_rows({sample_latent(mu_m, lv_m, ctx), sample_latent(mu_t, lv_t, ctx)});
  const Var recon = decode(z, T, ctx);
  const Var rec = nn::add(nn::smooth_l1(nn::slice_rows(recon, 0, B * T), tgt),
                          nn::smooth_l1(nn::slice_rows(recon, B * T, B * T), tgt));
  const Var kl = nn::add(nn::add(kl_to_unit(mu_m, lv_m), kl_to_unit(mu_t, lv_t)),
                         nn::add(kl_between(mu_m, lv_m, mu_t, lv_t), kl_between(mu_t, lv_t, mu_m, lv_m)));
  const Var emb = nn::mse(mu_m, mu_t);

  Matrix penalty = Matrix::Zero(B, B);
  if (!groups.empty())
    for (int i = 0; i < B; ++i)
      for (int j = 0; j < B; ++j)
        if (i != j && groups[i] >= 0 && groups[i] == groups[j]) penalty(i, j) = -1e9;
  const Var sim = nn::add(nn::scale(nn::matmul_nt(nn::row_l2_normalize(mu_m), nn::row_l2_normalize(mu_t)),
                                    1.0 / cfg_.temperature),
                          nn::constant(penalty));
  std::vector<int> diag(static_cast<std::size_t>(B));
  std::iota(diag.begin(), diag.end(), 0);
  const Var nce = nn::scale(nn::add(nn::cross_entropy_sum(sim, diag), nn::cross_entropy_sum(nn::transpose(sim), diag)),
                            0.5 / B);

  out.reconstruction = rec.item();
  out.kl = kl.item();
  out.embedding = emb.item();
  out.nce = nce.item();
  out.total = nn::add(nn::add(rec, nn::scale(kl, cfg_.lambda_kl)),
                      nn::add(nn::scale(emb, cfg_.lambda_e), nn::scale(nce, cfg_.lambda_nce)));
  return out;
}

void TmrModel::save(const std::filesystem::path& dir, const motion::NormalizationStats* norm,
                    const nlohmann::json& stats) {
  nn::Checkpoint ck;
  ck.kind = "tmr";
  ck.config = cfg_.to_json();
  ck.stats = stats;
  ck.put_params(parameters());
  if (norm) {
    ck.put("norm.mean", norm->mean);
    ck.put("norm.std", norm->std);
    ck.stats["norm_epsilon"] = norm->epsilon;
    ck.stats["norm_layout"] = norm->layout_tag;
  }
  nn::save_checkpoint(dir, ck);
}

std::unique_ptr<TmrModel> TmrModel::load(const std::filesystem::path& dir, motion::NormalizationStats* norm,
                                         nlohmann::json* stats) {
  const nn::Checkpoint ck = nn::load_checkpoint(dir, "tmr");
  auto model = std::make_unique<TmrModel>(TmrConfig::from_json(ck.config), 0);
  ck.load_params(model->parameters());
  if (norm) {
    if (!ck.has("norm.mean")) fail(ErrorKind::missing_artifact, "evaluator checkpoint has no normalization stats");
    norm->mean = ck.get("norm.mean");
    norm->std = ck.get("norm.std");
    norm->epsilon = ck.stats.value("norm_epsilon", 1e-6);
    norm->layout_tag = ck.stats.value("norm_layout", "");
  }
  if (stats) *stats = ck.stats;
  return model;
}

void TmrTrainConfig::read(ConfigReader& r) {
  r.get("epochs", epochs);
  r.get("batch_size", batch_size);
  r.get("window", window);
  r.get("lr", lr);
  r.get("warmup_steps", warmup_steps);
  r.get("lr_milestones", lr_milestones);
  r.get("lr_gamma", lr_gamma);
  r.get("seed", seed);
  r.check(epochs >= 0, "epochs", "must be >= 0");
  r.check(batch_size >= 2, "batch_size", "must be >= 2 for the contrastive term");
  r.check(window >= 0, "window", "must be >= 0");
  r.check(lr > 0, "lr", "must be positive");
  for (double m : lr_milestones) r.check(m > 0 && m < 1, "lr_milestones", "entries must lie in (0, 1)");
  r.check(lr_gamma > 0 && lr_gamma <= 1, "lr_gamma", "must lie in (0, 1]");
}

nlohmann::json TmrTrainConfig::to_json() const {
  return {{"epochs", epochs},   {"batch_size", batch_size},       {"window", window},
          {"lr", lr},           {"warmup_steps", warmup_steps},   {"lr_milestones", lr_milestones},
          {"lr_gamma", lr_gamma}, {"seed", seed}};
}

nlohmann::json TmrTrainReport::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& e : epochs)
    rows.push_back({{"epoch", e.epoch}, {"loss", e.loss}, {"reconstruction", e.reconstruction}, {"nce", e.nce}});
  return {{"steps", steps}, {"epochs", rows}};
}

TmrTrainReport train_tmr(TmrModel& model, const std::vector<TmrExample>& data, const TmrTrainConfig& cfg,
                         const std::function<void(const TmrEpochLog&)>& on_epoch) {
  require(data.size() >= 2, "evaluator training needs at least two pairs", ErrorKind::data_validation);
  require(cfg.batch_size >= 2, "contrastive loss needs a batch of at least 2");
  for (const auto& ex : data) {
    require(ex.motion.cols() == model.config().motion_dim, "training motion has the wrong width",
            ErrorKind::data_validation);
    require(ex.text.cols() == model.config().text_dim, "training text has the wrong width",
            ErrorKind::data_validation);
    if (cfg.window > 0) require(ex.motion.rows() >= cfg.window, "training motion is shorter than the crop window",
                                ErrorKind::data_validation);
  }
  Rng rng(cfg.seed);
  nn::AdamConfig ac;
  ac.lr = cfg.lr;
  nn::Adam adam(ac);
  const nn::LrSchedule lr_plan{cfg.lr, cfg.warmup_steps, cfg.lr_milestones, cfg.lr_gamma};
  auto params = model.parameters();

  TmrTrainReport report;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    TmrEpochLog row;
    row.epoch = epoch;
    int batches = 0;
    for (std::size_t at = 0; at + 1 < order.size(); at += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), at + cfg.batch_size);
      // Group by crop length so each loss call sees equal lengths.
      std::map<Eigen::Index, std::vector<std::size_t>> by_len;
      std::vector<Matrix> crops(end - at);
      for (std::size_t i = at; i < end; ++i) {
        const Matrix& m = data[order[i]].motion;
        if (cfg.window > 0 && m.rows() > cfg.window) {
          const auto start = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(m.rows() - cfg.window + 1)));
          crops[i - at] = m.middleRows(start, cfg.window);
        } else {
          crops[i - at] = m;
        }
        by_len[crops[i - at].rows()].push_back(i);
      }
      for (const auto& [len, idx] : by_len) {
        if (idx.size() < 2) continue;
        std::vector<const Matrix*> motions, texts;
        std::vector<int> groups;
        for (std::size_t i : idx) {
          motions.push_back(&crops[i - at]);
          texts.push_back(&data[order[i]].text);
          groups.push_back(data[order[i]].group);
        }
        adam.set_lr(lr_plan.at(report.steps, static_cast<double>(epoch) / cfg.epochs));
        nn::Context ctx{true, &rng};
        const TmrLosses l = model.loss(motions, texts, groups, ctx);
        if (!std::isfinite(l.total.item())) fail(ErrorKind::numeric, "evaluator loss is not finite");
        nn::backward(l.total);
        adam.step(params);
        row.loss += l.total.item();
        row.reconstruction += l.reconstruction;
        row.nce += l.nce;
        ++batches;
        ++report.steps;
      }
    }
    if (batches > 0) {
      row.loss /= batches;
      row.reconstruction /= batches;
      row.nce /= batches;
    }
    report.epochs.push_back(row);
    if (on_epoch) on_epoch(row);
  }
  return report;
}

}  // namespace msm::eval

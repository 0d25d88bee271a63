#include "msm/vq/model.hpp"

#include <cmath>

#include "msm/core/error.hpp"
#include "msm/nn/checkpoint.hpp"

namespace msm::vq {

using nn::Var;

namespace {

int stage_count(int downscale) {
  int s = 0;
  while ((1 << s) < downscale) ++s;
  return s;
}

const char* mode_name(VqMode m) { return m == VqMode::multi_scale ? "multi_scale" : "full_scale_baseline"; }

}  // namespace

void VqConfig::validate() const {
  require(input_dim > 0 && width > 0 && latent_dim > 0, "vq dimensions must be positive", ErrorKind::config);
  require(codebook_size >= 2, "vq.codebook_size must be >= 2", ErrorKind::config);
  require(extra_layers >= 0, "vq.extra_layers must be >= 0", ErrorKind::config);
  require(downscale >= 1 && (downscale & (downscale - 1)) == 0, "vq.downscale must be a power of two",
          ErrorKind::config);
  require(res_blocks >= 0 && dilation_growth >= 1, "vq res-block settings are invalid", ErrorKind::config);
  require(beta >= 0 && lambda_ess >= 0, "vq.beta and vq.lambda_ess must be >= 0", ErrorKind::config);
  require(essential_dim >= 0, "vq.essential_dim must be >= 0", ErrorKind::config);
  require(ema_decay > 0 && ema_decay < 1, "vq.ema_decay must lie in (0, 1)", ErrorKind::config);
  require(reset_window >= 0, "vq.reset_window must be >= 0", ErrorKind::config);
  if (!scale_ratios.empty()) {
    require(static_cast<int>(scale_ratios.size()) == extra_layers + 1,
            "vq.scale_ratios needs extra_layers + 1 entries", ErrorKind::config);
    require(scale_ratios.back() == 1.0, "vq.scale_ratios must end at 1", ErrorKind::config);
  }
}

ScaleSchedule VqConfig::schedule(int latent_len) const {
  if (mode == VqMode::full_scale_baseline) return ScaleSchedule::full_scale(latent_len, extra_layers);
  if (!scale_ratios.empty()) return ScaleSchedule::from_ratios(latent_len, scale_ratios);
  return ScaleSchedule::halving(latent_len, extra_layers);
}

nlohmann::json VqConfig::to_json() const {
  return {{"input_dim", input_dim},
          {"width", width},
          {"latent_dim", latent_dim},
          {"codebook_size", codebook_size},
          {"extra_layers", extra_layers},
          {"scale_ratios", scale_ratios},
          {"downscale", downscale},
          {"res_blocks", res_blocks},
          {"dilation_growth", dilation_growth},
          {"attention", attention},
          {"beta", beta},
          {"lambda_ess", lambda_ess},
          {"essential_dim", essential_dim},
          {"mode", mode_name(mode)},
          {"ema_decay", ema_decay},
          {"reset_window", reset_window},
          {"straight_through", straight_through}};
}

void VqConfig::read(ConfigReader& r) {
  r.get("input_dim", input_dim);
  r.get("width", width);
  r.get("latent_dim", latent_dim);
  r.get("codebook_size", codebook_size);
  r.get("extra_layers", extra_layers);
  r.get("scale_ratios", scale_ratios);
  r.get("downscale", downscale);
  r.get("res_blocks", res_blocks);
  r.get("dilation_growth", dilation_growth);
  r.get("attention", attention);
  r.get("beta", beta);
  r.get("lambda_ess", lambda_ess);
  r.get("essential_dim", essential_dim);
  std::string m = mode_name(mode);
  r.get("mode", m);
  r.check(m == "multi_scale" || m == "full_scale_baseline", "mode", "must be multi_scale or full_scale_baseline");
  mode = m == "multi_scale" ? VqMode::multi_scale : VqMode::full_scale_baseline;
  r.get("ema_decay", ema_decay);
  r.get("reset_window", reset_window);
  r.get("straight_through", straight_through);
  r.finish();
  validate();
}

VqConfig VqConfig::from_json(const nlohmann::json& j) {
  VqConfig c;
  ConfigReader r(j, "vq");
  c.read(r);
  return c;
}

ResBlock::ResBlock(const std::string& name, int width, int dilation, bool attention, Rng& rng)
    : conv1_(name + ".conv1", width, width, 3, 1, dilation, dilation, rng),
      conv2_(name + ".conv2", width, width, 1, 1, 0, 1, rng),
      attention_(attention) {
  if (attention) {
    norm_ = nn::LayerNorm(name + ".norm", width);
    attn_ = nn::MultiHeadAttention(name + ".attn", width, 1, rng);
  }
}

Var ResBlock::forward(const Var& x, int segments) {
  Var h = nn::add(x, conv2_.forward(nn::relu(conv1_.forward(nn::relu(x), segments)), segments));
  if (attention_) {
    const Var n = norm_.forward(h);
    h = nn::add(h, attn_.forward(n, n, {}, segments));
  }
  return h;
}

void ResBlock::visit(const nn::ParamVisitor& f) {
  conv1_.visit(f);
  conv2_.visit(f);
  if (attention_) {
    norm_.visit(f);
    attn_.visit(f);
  }
}

VqModel::VqModel(const VqConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  const int W = cfg_.width;
  const int stages = stage_count(cfg_.downscale);
  enc_in_ = nn::Conv1d("enc.in", cfg_.input_dim, W, 3, 1, 1, 1, rng);
  for (int s = 0; s < stages; ++s) {
    const std::string p = "enc.stage" + std::to_string(s);
    enc_down_.emplace_back(p + ".down", W, W, 4, 2, 1, 1, rng);
    std::vector<ResBlock> blocks;
    for (int b = 0; b < cfg_.res_blocks; ++b) {
      int dil = 1;
      for (int k = 0; k < cfg_.res_blocks - 1 - b; ++k) dil *= cfg_.dilation_growth;
      blocks.emplace_back(p + ".res" + std::to_string(b), W, dil, cfg_.attention, rng);
    }
    enc_blocks_.push_back(std::move(blocks));
  }
  enc_out_ = nn::Conv1d("enc.out", W, cfg_.latent_dim, 3, 1, 1, 1, rng);

  dec_in_ = nn::Conv1d("dec.in", cfg_.latent_dim, W, 3, 1, 1, 1, rng);
  for (int s = 0; s < stages; ++s) {
    const std::string p = "dec.stage" + std::to_string(s);
    std::vector<ResBlock> blocks;
    for (int b = 0; b < cfg_.res_blocks; ++b) {
      int dil = 1;
      for (int k = 0; k < cfg_.res_blocks - 1 - b; ++k) dil *= cfg_.dilation_growth;
      blocks.emplace_back(p + ".res" + std::to_string(b), W, dil, cfg_.attention, rng);
    }
    dec_blocks_.push_back(std::move(blocks));
    dec_up_.emplace_back(p + ".up", W, W, 3, 1, 1, 1, rng);
  }
  dec_mid_ = nn::Conv1d("dec.mid", W, W, 3, 1, 1, 1, rng);
  dec_out_ = nn::Conv1d("dec.out", W, cfg_.input_dim, 3, 1, 1, 1, rng);

  const int books = cfg_.mode == VqMode::multi_scale ? 1 : cfg_.extra_layers + 1;
  for (int b = 0; b < books; ++b) codebooks_.emplace_back(cfg_.codebook_size, cfg_.latent_dim, cfg_.ema_decay);
}

std::vector<nn::Parameter*> VqModel::parameters() {
  std::vector<nn::Parameter*> out;
  auto add = [&](nn::Parameter& p) { out.push_back(&p); };
  enc_in_.visit(add);
  for (std::size_t s = 0; s < enc_down_.size(); ++s) {
    enc_down_[s].visit(add);
    for (auto& b : enc_blocks_[s]) b.visit(add);
  }
  enc_out_.visit(add);
  dec_in_.visit(add);
  for (std::size_t s = 0; s < dec_up_.size(); ++s) {
    for (auto& b : dec_blocks_[s]) b.visit(add);
    dec_up_[s].visit(add);
  }
  dec_mid_.visit(add);
  dec_out_.visit(add);
  return out;
}

Var VqModel::encode_var(const Var& x, int segments) {
  require(x.cols() == cfg_.input_dim, "feature width " + std::to_string(x.cols()) + " does not match model input " +
                                          std::to_string(cfg_.input_dim));
  require(segments >= 1 && x.rows() % segments == 0, "batch rows not divisible into clips");
  const Eigen::Index len = x.rows() / segments;
  if (len < cfg_.downscale) fail(ErrorKind::invalid_argument, "clip too short");
  require(len % cfg_.downscale == 0, "clip length must be a multiple of the downscale factor");
  Var h = nn::relu(enc_in_.forward(x, segments));
  for (std::size_t s = 0; s < enc_down_.size(); ++s) {
    h = enc_down_[s].forward(h, segments);
    for (auto& b : enc_blocks_[s]) h = b.forward(h, segments);
  }
  return enc_out_.forward(h, segments);
}

Var VqModel::decode_var(const Var& z, int segments) {
  require(z.cols() == cfg_.latent_dim, "latent width does not match model");
  require(segments >= 1 && z.rows() % segments == 0, "batch rows not divisible into clips");
  Var h = nn::relu(dec_in_.forward(z, segments));
  for (std::size_t s = 0; s < dec_up_.size(); ++s) {
    for (auto& b : dec_blocks_[s]) h = b.forward(h, segments);
    h = dec_up_[s].forward(nn::upsample_rows(h, 2), segments);
  }
  h = nn::relu(dec_mid_.forward(h, segments));
  return dec_out_.forward(h, segments);
}

Matrix VqModel::encode(const Matrix& feat) {
  const int N = static_cast<int>(feat.rows());
  if (N < cfg_.downscale) fail(ErrorKind::invalid_argument, "clip too short");
  const int padded = cfg_.latent_length(N) * cfg_.downscale;
  Matrix x(padded, feat.cols());
  x.topRows(N) = feat;
  for (int t = N; t < padded; ++t) x.row(t) = feat.row(N - 1);
  return encode_var(nn::constant(std::move(x))).value();
}

Matrix VqModel::decode(const Matrix& latent, int frames) {
  Matrix out = decode_var(nn::constant(latent)).value();
  if (frames >= 0) {
    require(frames <= out.rows(), "requested more frames than the latent covers");
    out.conservativeResize(frames, Eigen::NoChange);
  }
  return out;
}

Codebook& VqModel::codebook(int layer) {
  return codebooks_.size() == 1 ? codebooks_[0] : codebooks_.at(static_cast<std::size_t>(layer));
}

const Codebook& VqModel::codebook(int layer) const {
  return codebooks_.size() == 1 ? codebooks_[0] : codebooks_.at(static_cast<std::size_t>(layer));
}

CodebookFor VqModel::codebook_for() const {
  return [this](int layer) -> const Codebook& { return codebook(layer); };
}

QuantizeResult VqModel::quantize_latent(const Matrix& f) const {
  for (const auto& cb : codebooks_) require(cb.initialized(), "codebook has not been initialized", ErrorKind::config);
  return quantize(f, cfg_.schedule(static_cast<int>(f.rows())), codebook_for());
}

QuantizedMotion VqModel::tokenize(const Matrix& feat) { return quantize_latent(encode(feat)).tokens; }

Matrix VqModel::decode_tokens(const QuantizedMotion& q, int frames, int upto) {
  require(q.schedule.layers() == cfg_.extra_layers + 1, "token layers do not match the model");
  return decode(dequantize(q, codebook_for(), upto), frames);
}

Matrix VqModel::reconstruct(const Matrix& feat) {
  const auto q = quantize_latent(encode(feat));
  return decode(q.reconstruction, static_cast<int>(feat.rows()));
}

VqLosses VqModel::loss(const std::vector<Matrix>& clips) {
  require(!clips.empty(), "empty training batch");
  const int B = static_cast<int>(clips.size());
  const Eigen::Index len = clips[0].rows();
  Matrix stacked(len * B, clips[0].cols());
  for (int b = 0; b < B; ++b) {
    require(clips[b].rows() == len && clips[b].cols() == clips[0].cols(), "batch clips must share one shape");
    stacked.middleRows(b * len, len) = clips[b];
  }
  VqLosses out;
  const Var x = nn::constant(std::move(stacked));
  const Var f = encode_var(x, B);
  const Eigen::Index n = f.rows() / B;
  const ScaleSchedule sched = cfg_.schedule(static_cast<int>(n));

  Matrix reconstruction(f.rows(), f.cols());
  std::vector<Matrix> codes_at(static_cast<std::size_t>(sched.layers()));
  std::vector<Matrix> consumed_before(static_cast<std::size_t>(sched.layers()));
  for (int v = 0; v < sched.layers(); ++v) {
    codes_at[v] = Matrix(sched.lengths[v] * B, f.cols());
    consumed_before[v] = Matrix(f.rows(), f.cols());
  }
  for (int b = 0; b < B; ++b) {
    QuantizeResult q = quantize_latent(f.value().middleRows(b * n, n));
    reconstruction.middleRows(b * n, n) = q.reconstruction;
    Matrix consumed = Matrix::Zero(n, f.cols());
    for (int v = 0; v < sched.layers(); ++v) {
      codes_at[v].middleRows(b * sched.lengths[v], sched.lengths[v]) = q.layer_codes[v];
      consumed_before[v].middleRows(b * n, n) = consumed;
      consumed += interpolate(q.layer_codes[v], static_cast<int>(n));
    }
    out.quantized.push_back(std::move(q));
  }

  // Commitment at each layer's own resolution; codes are constants here.
  Var commit;
  for (int v = 0; v < sched.layers(); ++v) {
    const Var residual = v == 0 ? f : nn::sub(f, nn::constant(consumed_before[v]));
    const int h = sched.lengths[v];
    const Var at_scale =
        h == n ? residual : nn::block_matmul(interpolation_matrix(static_cast<int>(n), h), residual, B);
    const Var term = nn::mse(at_scale, nn::constant(codes_at[v]));
    commit = v == 0 ? term : nn::add(commit, term);
  }

  const Var f_hat = cfg_.straight_through ? nn::add(f, nn::constant(reconstruction - f.value()))
                                          : nn::constant(reconstruction);
  const Var m_hat = decode_var(f_hat, B);
  const Var recon = nn::smooth_l1(m_hat, x);
  Var total = nn::add(recon, nn::scale(commit, cfg_.beta));
  const int ess = std::min(cfg_.essential_dim, cfg_.input_dim);
  if (ess > 0) {
    const Var e = nn::smooth_l1(nn::slice_cols(m_hat, 0, ess), nn::slice_cols(x, 0, ess));
    out.essential = e.item();
    total = nn::add(total, nn::scale(e, cfg_.lambda_ess));
  }
  out.reconstruction = recon.item();
  out.commitment = commit.item();
  out.total = total;
  return out;
}

void VqModel::initialize_codebooks(const std::vector<Matrix>& clips, Rng& rng) {
  std::vector<Matrix> latents;
  for (const auto& c : clips) latents.push_back(encode(c));
  if (cfg_.mode == VqMode::multi_scale) {
    if (codebooks_[0].initialized()) return;
    Eigen::Index rows = 0;
    for (const auto& l : latents) rows += l.rows();
    Matrix pool(rows, cfg_.latent_dim);
    Eigen::Index at = 0;
    for (const auto& l : latents) {
      pool.middleRows(at, l.rows()) = l;
      at += l.rows();
    }
    codebooks_[0].initialize_from(pool, rng);
    return;
  }
  // Per-layer books: layer v is seeded from the residual left by layers < v.
  std::vector<Matrix> residual = latents;
  for (int v = 0; v <= cfg_.extra_layers; ++v) {
    Codebook& cb = codebooks_[v];
    if (!cb.initialized()) {
      Eigen::Index rows = 0;
      for (const auto& r : residual) rows += r.rows();
      Matrix pool(rows, cfg_.latent_dim);
      Eigen::Index at = 0;
      for (const auto& r : residual) {
        pool.middleRows(at, r.rows()) = r;
        at += r.rows();
      }
      cb.initialize_from(pool, rng);
    }
    for (auto& r : residual) r -= cb.lookup(cb.nearest_rows(r));
  }
}

void VqModel::save(const std::filesystem::path& dir, const motion::NormalizationStats* norm,
                   const nlohmann::json& stats) {
  nn::Checkpoint ck;
  ck.kind = "msrvq";
  ck.config = cfg_.to_json();
  ck.stats = stats;
  ck.put_params(parameters());
  for (std::size_t b = 0; b < codebooks_.size(); ++b) {
    const std::string p = "codebook." + std::to_string(b);
    ck.put(p + ".codes", codebooks_[b].codes());
    ck.put(p + ".counts", codebooks_[b].ema_counts());
    ck.put(p + ".sums", codebooks_[b].ema_sums());
  }
  if (norm) {
    ck.put("norm.mean", norm->mean);
    ck.put("norm.std", norm->std);
    ck.stats["norm_epsilon"] = norm->epsilon;
    ck.stats["norm_layout"] = norm->layout_tag;
  }
  nn::save_checkpoint(dir, ck);
}

std::unique_ptr<VqModel> VqModel::load(const std::filesystem::path& dir, motion::NormalizationStats* norm,
                                       nlohmann::json* stats) {
  const nn::Checkpoint ck = nn::load_checkpoint(dir, "msrvq");
  auto model = std::make_unique<VqModel>(VqConfig::from_json(ck.config), 0);
  ck.load_params(model->parameters());
  for (std::size_t b = 0; b < model->codebooks_.size(); ++b) {
    const std::string p = "codebook." + std::to_string(b);
    model->codebooks_[b].set_state(ck.get(p + ".codes"), ck.get(p + ".counts"), ck.get(p + ".sums"));
  }
  if (norm) {
    if (!ck.has("norm.mean")) fail(ErrorKind::missing_artifact, "checkpoint has no normalization stats");
    norm->mean = ck.get("norm.mean");
    norm->std = ck.get("norm.std");
    norm->epsilon = ck.stats.value("norm_epsilon", 1e-6);
    norm->layout_tag = ck.stats.value("norm_layout", "");
  }
  if (stats) *stats = ck.stats;
  return model;
}

}  // namespace msm::vq

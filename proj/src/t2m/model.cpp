#include "msm/t2m/model.hpp"

#include <algorithm>

#include "msm/core/error.hpp"
#include "msm/nn/checkpoint.hpp"

namespace msm::t2m {

using nn::Var;

const char* conditioning_name(Conditioning c) {
  return c == Conditioning::in_context ? "in_context" : "cross_attention";
}

void T2mConfig::validate() const {
  require(layers >= 1 && ff >= 1 && dim >= 1 && heads >= 1, "t2m dimensions must be positive", ErrorKind::config);
  require(dim % heads == 0, "t2m.dim must be divisible by t2m.heads", ErrorKind::config);
  require(dropout >= 0 && dropout < 1, "t2m.dropout must lie in [0, 1)", ErrorKind::config);
  require(cfg_dropout >= 0 && cfg_dropout <= 1, "t2m.cfg_dropout must lie in [0, 1]", ErrorKind::config);
  require(iterations >= 1, "t2m.iterations must be >= 1", ErrorKind::config);
  require(temperature >= 0, "t2m.temperature must be >= 0", ErrorKind::config);
  require(codebook_size >= 2 && text_dim >= 1, "t2m vocabulary sizes must be positive", ErrorKind::config);
  require(max_positions >= 1 && max_scales >= 1, "t2m position tables must be non-empty", ErrorKind::config);
}

nlohmann::json T2mConfig::to_json() const {
  return {{"layers", layers},
          {"ff", ff},
          {"dim", dim},
          {"heads", heads},
          {"dropout", dropout},
          {"conditioning", conditioning_name(conditioning)},
          {"cfg_dropout", cfg_dropout},
          {"cfg_scale", cfg_scale},
          {"iterations", iterations},
          {"temperature", temperature},
          {"codebook_size", codebook_size},
          {"text_dim", text_dim},
          {"max_positions", max_positions},
          {"max_scales", max_scales}};
}

void T2mConfig::read(ConfigReader& r) {
  r.get("layers", layers);
  r.get("ff", ff);
  r.get("dim", dim);
  r.get("heads", heads);
  r.get("dropout", dropout);
  std::string c = conditioning_name(conditioning);
  r.get("conditioning", c);
  r.check(c == "in_context" || c == "cross_attention", "conditioning", "must be in_context or cross_attention");
  conditioning = c == "in_context" ? Conditioning::in_context : Conditioning::cross_attention;
  r.get("cfg_dropout", cfg_dropout);
  r.get("cfg_scale", cfg_scale);
  r.get("iterations", iterations);
  r.get("temperature", temperature);
  r.get("codebook_size", codebook_size);
  r.get("text_dim", text_dim);
  r.get("max_positions", max_positions);
  r.get("max_scales", max_scales);
  r.finish();
  validate();
}

T2mConfig T2mConfig::from_json(const nlohmann::json& j) {
  T2mConfig c;
  ConfigReader r(j, "t2m");
  c.read(r);
  return c;
}

T2mModel::T2mModel(const T2mConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  const int D = cfg_.dim;
  token_emb_ = nn::Embedding("tok", cfg_.codebook_size + 2, D, rng);
  scale_emb_ = nn::Embedding("scale", cfg_.max_scales, D, rng);
  pos_emb_ = nn::Embedding("pos", cfg_.max_positions, D, rng);
  text_proj_ = nn::Linear("text.proj", cfg_.text_dim, D, rng);
  null_text_ = nn::Parameter("text.null", nn::normal_init(1, D, 0.02, rng));
  separator_ = nn::Parameter("text.sep", nn::normal_init(1, D, 0.02, rng));
  const bool cross = cfg_.conditioning == Conditioning::cross_attention;
  for (int l = 0; l < cfg_.layers; ++l)
    blocks_.emplace_back("block" + std::to_string(l), D, cfg_.heads, cfg_.ff, cfg_.dropout, cross, rng);
  final_norm_ = nn::LayerNorm("final_norm", D);
  head_ = nn::Linear("head", D, cfg_.codebook_size, rng);
}

std::vector<nn::Parameter*> T2mModel::parameters() {
  std::vector<nn::Parameter*> out;
  auto add = [&](nn::Parameter& p) { out.push_back(&p); };
  token_emb_.visit(add);
  scale_emb_.visit(add);
  pos_emb_.visit(add);
  text_proj_.visit(add);
  out.push_back(&null_text_);
  if (cfg_.conditioning == Conditioning::in_context) out.push_back(&separator_);
  for (auto& b : blocks_) b.visit(add);
  final_norm_.visit(add);
  head_.visit(add);
  return out;
}

Var T2mModel::forward(const std::vector<T2mInput>& batch, const nn::Context& ctx) {
  require(!batch.empty(), "t2m forward needs at least one sequence");
  const int B = static_cast<int>(batch.size());
  const int K = cfg_.codebook_size;
  const int D = cfg_.dim;
  int n_max = 0, t_max = 1;
  for (const auto& in : batch) {
    require(in.tokens != nullptr, "t2m input has no tokens");
    const auto& s = *in.tokens;
    require(s.size() >= 1, "token sequence is empty");
    require(s.scale_ids.size() == s.tokens.size() && s.positions.size() == s.tokens.size(),
            "token layout fields differ in length");
    n_max = std::max(n_max, s.size());
    if (in.text) {
      if (in.text->cols() != cfg_.text_dim)
        fail(ErrorKind::invalid_argument, "text feature width " + std::to_string(in.text->cols()) +
                                              " does not match model text width " + std::to_string(cfg_.text_dim));
      require(in.text->rows() >= 1, "text feature sequence is empty");
      t_max = std::max(t_max, static_cast<int>(in.text->rows()));
    }
  }

  std::vector<int> ids(static_cast<std::size_t>(B * n_max), pad_token(K));
  std::vector<int> sids(ids.size(), 0), pids(ids.size(), 0);
  std::vector<char> motion_valid(ids.size(), 0);
  for (int b = 0; b < B; ++b) {
    const auto& s = *batch[b].tokens;
    for (int i = 0; i < s.size(); ++i) {
      const std::size_t r = static_cast<std::size_t>(b * n_max + i);
      require(s.tokens[i] >= 0 && s.tokens[i] <= pad_token(K), "token id out of range");
      require(s.scale_ids[i] >= 0 && s.scale_ids[i] < cfg_.max_scales, "scale id exceeds the model's scale table");
      require(s.positions[i] >= 0 && s.positions[i] < cfg_.max_positions,
              "token position exceeds the model's position table");
      ids[r] = s.tokens[i];
      sids[r] = s.scale_ids[i];
      pids[r] = s.positions[i];
      motion_valid[r] = 1;
    }
  }
  const Var motion = nn::add(nn::add(token_emb_.forward(ids), scale_emb_.forward(sids)), pos_emb_.forward(pids));

  // Text rows: projected features plus sinusoidal positions, or the null row.
  Matrix raw = Matrix::Zero(B * t_max, cfg_.text_dim);
  Matrix keep = Matrix::Zero(B * t_max, D), null_mask = Matrix::Zero(B * t_max, D);
  Matrix positions(B * t_max, D);
  const Matrix pe = nn::sinusoidal_positions(t_max, D);
  std::vector<char> text_valid(static_cast<std::size_t>(B * t_max), 0);
  for (int b = 0; b < B; ++b) {
    positions.middleRows(b * t_max, t_max) = pe;
    if (batch[b].text) {
      const auto t = static_cast<int>(batch[b].text->rows());
      raw.middleRows(b * t_max, t) = *batch[b].text;
      keep.middleRows(b * t_max, t).setOnes();
      for (int i = 0; i < t; ++i) text_valid[static_cast<std::size_t>(b * t_max + i)] = 1;
    } else {
      null_mask.row(b * t_max).setOnes();
      text_valid[static_cast<std::size_t>(b * t_max)] = 1;
    }
  }
  const Var text = nn::add(
      nn::mul(nn::add(text_proj_.forward(nn::constant(raw)), nn::constant(positions)), nn::constant(keep)),
      nn::mul(nn::add_row(nn::constant(Matrix::Zero(B * t_max, D)), nn::param(null_text_)),
              nn::constant(null_mask)));

  Var h;
  if (cfg_.conditioning == Conditioning::in_context) {
    const int L = t_max + 1 + n_max;
    const Var sep = nn::param(separator_);
    std::vector<Var> parts;
    std::vector<char> valid;
    valid.reserve(static_cast<std::size_t>(B * L));
    for (int b = 0; b < B; ++b) {
      parts.push_back(nn::slice_rows(text, b * t_max, t_max));
      parts.push_back(sep);
      parts.push_back(nn::slice_rows(motion, b * n_max, n_max));
      valid.insert(valid.end(), text_valid.begin() + b * t_max, text_valid.begin() + (b + 1) * t_max);
      valid.push_back(1);
      valid.insert(valid.end(), motion_valid.begin() + b * n_max, motion_valid.begin() + (b + 1) * n_max);
    }
    h = nn::concat_rows(parts);
    for (auto& blk : blocks_) h = blk.forward(h, valid, ctx, {}, {}, B);
    std::vector<int> rows;
    rows.reserve(static_cast<std::size_t>(B * n_max));
    for (int b = 0; b < B; ++b)
      for (int i = 0; i < n_max; ++i) rows.push_back(b * L + t_max + 1 + i);
    h = nn::gather_rows(h, rows);
  } else {
    h = motion;
    for (auto& blk : blocks_) h = blk.forward(h, motion_valid, ctx, text, text_valid, B);
  }
  return head_.forward(final_norm_.forward(h));
}

Matrix T2mModel::logits(const FlatTokenSequence& tokens, const Matrix* text) {
  return forward({T2mInput{&tokens, text}}).value();
}

std::pair<Matrix, Matrix> T2mModel::guided_pair(const FlatTokenSequence& tokens, const Matrix& text) {
  const Matrix both = forward({T2mInput{&tokens, &text}, T2mInput{&tokens, nullptr}}).value();
  const Eigen::Index n = tokens.size();
  return {both.topRows(n), both.bottomRows(n)};
}

Var T2mModel::masked_loss(const std::vector<Corruption>& corrupted, const std::vector<const Matrix*>& texts,
                          const nn::Context& ctx) {
  require(corrupted.size() == texts.size(), "masked loss needs one text slot per sequence");
  std::vector<T2mInput> batch;
  int n_max = 0, selected = 0;
  for (std::size_t b = 0; b < corrupted.size(); ++b) {
    batch.push_back(T2mInput{&corrupted[b].input, texts[b]});
    n_max = std::max(n_max, corrupted[b].input.size());
    selected += corrupted[b].selected;
  }
  require(selected > 0, "masked loss has no selected positions");
  std::vector<int> targets(static_cast<std::size_t>(corrupted.size()) * n_max, -1);
  for (std::size_t b = 0; b < corrupted.size(); ++b)
    std::copy(corrupted[b].targets.begin(), corrupted[b].targets.end(), targets.begin() + b * n_max);
  return nn::scale(nn::cross_entropy_sum(forward(batch, ctx), targets), 1.0 / selected);
}

void T2mModel::save(const std::filesystem::path& dir, const ToyTextEmbedder* embedder, const nlohmann::json& stats) {
  nn::Checkpoint ck;
  ck.kind = "t2m";
  ck.config = cfg_.to_json();
  ck.stats = stats;
  ck.put_params(parameters());
  if (embedder) {
    ck.put("embedder.table", embedder->table());
    ck.stats["embedder_vocabulary"] = embedder->vocabulary();
  }
  nn::save_checkpoint(dir, ck);
}

std::unique_ptr<T2mModel> T2mModel::load(const std::filesystem::path& dir, ToyTextEmbedder* embedder,
                                         nlohmann::json* stats, std::optional<Conditioning> expected) {
  const nn::Checkpoint ck = nn::load_checkpoint(dir, "t2m");
  const T2mConfig cfg = T2mConfig::from_json(ck.config);
  if (expected && *expected != cfg.conditioning)
    fail(ErrorKind::config, std::string("checkpoint was trained with ") + conditioning_name(cfg.conditioning) +
                                " conditioning, not " + conditioning_name(*expected));
  auto model = std::make_unique<T2mModel>(cfg, 0);
  ck.load_params(model->parameters());
  if (embedder) {
    if (!ck.has("embedder.table")) fail(ErrorKind::missing_artifact, "checkpoint has no text embedder");
    *embedder = ToyTextEmbedder(ck.stats.at("embedder_vocabulary").get<std::vector<std::string>>(),
                                ck.get("embedder.table"));
  }
  if (stats) *stats = ck.stats;
  return model;
}

}  // namespace msm::t2m

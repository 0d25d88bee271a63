#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "msm/core/config.hpp"
#include "msm/motion/normalization.hpp"
#include "msm/nn/layers.hpp"

namespace msm::eval {

struct TmrConfig {
  int layers = 6;
  int latent = 256;  // transformer width and embedding size
  int heads = 4;
  int ff = 1024;
  double dropout = 0.1;
  int motion_dim = 148;
  int text_dim = 300;
  double lambda_e = 1e-5;
  double lambda_kl = 1e-5;
  double lambda_nce = 0.1;
  double temperature = 0.1;

  void validate() const;
  nlohmann::json to_json() const;
  static TmrConfig from_json(const nlohmann::json& j);
  void read(ConfigReader& r);
};

enum class Modality { motion, text };

struct EvalEmbedding {
  RowVector mean;
  RowVector log_var;
  Modality modality = Modality::motion;
};

/// Transformer over a feature sequence with two learned readout tokens
/// prepended; their outputs are the mean and log-variance.
class DistributionEncoder {
 public:
  DistributionEncoder() = default;
  DistributionEncoder(const std::string& name, int in_dim, const TmrConfig& cfg, Rng& rng);

  /// Sequences may differ in length; shorter ones are padded and masked.
  std::pair<nn::Var, nn::Var> forward(const std::vector<const Matrix*>& seqs, const nn::Context& ctx);
  void visit(const nn::ParamVisitor& f);
  int in_dim() const { return in_dim_; }

 private:
  int in_dim_ = 0;
  int width_ = 0;
  nn::Linear proj_;
  nn::Parameter readout_;
  std::vector<nn::TransformerLayer> layers_;
  nn::LayerNorm norm_;
};

struct TmrLosses {
  nn::Var total;
  double reconstruction = 0;
  double kl = 0;
  double embedding = 0;
  double nce = 0;
};

class TmrModel {
 public:
  TmrModel(const TmrConfig& cfg, std::uint64_t seed);

  const TmrConfig& config() const { return cfg_; }
  std::vector<nn::Parameter*> parameters();

  std::pair<nn::Var, nn::Var> encode_motion(const std::vector<const Matrix*>& motions, const nn::Context& ctx = {});
  std::pair<nn::Var, nn::Var> encode_text(const std::vector<const Matrix*>& texts, const nn::Context& ctx = {});
  /// Rows of z (B x latent) decoded to `frames` frames each, stacked by rows.
  nn::Var decode(const nn::Var& z, int frames, const nn::Context& ctx = {});

  /// Motion input uses the essential layout (normalized).
  EvalEmbedding embed_motion(const Matrix& essential);
  EvalEmbedding embed_text(const Matrix& text);
  std::vector<EvalEmbedding> embed_motions(const std::vector<Matrix>& clips, int batch = 32);

  /// Compound objective over equal-length motions. With `texts` empty only
  /// the motion branch runs (reconstruction plus KL to the unit Gaussian).
  /// Pairs sharing a nonnegative `group` id are not used as each other's
  /// contrastive negatives. With ctx.training the latents are sampled with
  /// ctx.rng; otherwise the means are decoded.
  TmrLosses loss(const std::vector<const Matrix*>& motions, const std::vector<const Matrix*>& texts,
                 const std::vector<int>& groups = {}, const nn::Context& ctx = {});

  void save(const std::filesystem::path& dir, const motion::NormalizationStats* norm,
            const nlohmann::json& stats = nlohmann::json::object());
  static std::unique_ptr<TmrModel> load(const std::filesystem::path& dir, motion::NormalizationStats* norm = nullptr,
                                        nlohmann::json* stats = nullptr);

 private:
  TmrConfig cfg_;
  DistributionEncoder motion_enc_, text_enc_;
  std::vector<nn::TransformerLayer> dec_layers_;
  nn::LayerNorm dec_norm_;
  nn::Linear dec_out_;
};

/// Training pair for the evaluator.
struct TmrExample {
  Matrix motion;  // essential, normalized
  Matrix text;
  int group = -1;  // caption identity for negative filtering
};

struct TmrTrainConfig {
  int epochs = 50;
  int batch_size = 64;
  int window = 0;  // crop length in frames, 0 keeps whole clips (equal lengths required)
  double lr = 1e-4;
  int warmup_steps = 0;
  std::vector<double> lr_milestones;
  double lr_gamma = 0.1;
  std::uint64_t seed = 0;

  void read(ConfigReader& r);
  nlohmann::json to_json() const;
};

struct TmrEpochLog {
  int epoch = 0;
  double loss = 0;
  double reconstruction = 0;
  double nce = 0;
};

struct TmrTrainReport {
  std::vector<TmrEpochLog> epochs;
  long steps = 0;
  nlohmann::json to_json() const;
};

TmrTrainReport train_tmr(TmrModel& model, const std::vector<TmrExample>& data, const TmrTrainConfig& cfg,
                         const std::function<void(const TmrEpochLog&)>& on_epoch = {});

}  // namespace msm::eval

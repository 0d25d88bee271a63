#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "msm/core/config.hpp"
#include "msm/motion/normalization.hpp"
#include "msm/nn/layers.hpp"
#include "msm/vq/quantizer.hpp"

namespace msm::vq {

enum class VqMode { multi_scale, full_scale_baseline };

struct VqConfig {
  int input_dim = 296;
  int width = 512;  // hidden conv channels
  int latent_dim = 512;
  int codebook_size = 512;
  int extra_layers = 1;  // V: quantization layers beyond the first
  std::vector<double> scale_ratios;  // empty: halving schedule
  int downscale = 4;  // power of two
  int res_blocks = 3;
  int dilation_growth = 3;
  bool attention = true;
  double beta = 0.02;
  double lambda_ess = 2.0;
  int essential_dim = 148;
  VqMode mode = VqMode::multi_scale;
  double ema_decay = 0.99;
  int reset_window = 256;  // batches between dead-code resets; 0 disables
  bool straight_through = true;

  void validate() const;
  ScaleSchedule schedule(int latent_len) const;
  int latent_length(int frames) const { return (frames + downscale - 1) / downscale; }
  nlohmann::json to_json() const;
  static VqConfig from_json(const nlohmann::json& j);
  void read(ConfigReader& r);
};

class ResBlock {
 public:
  ResBlock() = default;
  ResBlock(const std::string& name, int width, int dilation, bool attention, Rng& rng);
  nn::Var forward(const nn::Var& x, int segments = 1);
  void visit(const nn::ParamVisitor& f);

 private:
  nn::Conv1d conv1_, conv2_;
  nn::LayerNorm norm_;
  nn::MultiHeadAttention attn_;
  bool attention_ = false;
};

struct VqLosses {
  nn::Var total;
  double reconstruction = 0;  // SmoothL1 over all columns
  double commitment = 0;      // summed over layers, before beta
  double essential = 0;       // SmoothL1 over the essential columns
  std::vector<QuantizeResult> quantized;  // one per clip
};

class VqModel {
 public:
  VqModel(const VqConfig& cfg, std::uint64_t seed);

  const VqConfig& config() const { return cfg_; }
  std::vector<nn::Parameter*> parameters();

  /// `segments` equal-length clips stacked by rows are processed
  /// independently in one pass.
  nn::Var encode_var(const nn::Var& x, int segments = 1);
  nn::Var decode_var(const nn::Var& z, int segments = 1);

  /// Frames that are not a multiple of the downscale factor are padded by
  /// repeating the last frame; the latent covers ceil(N / downscale) steps.
  Matrix encode(const Matrix& feat);
  /// Output is trimmed to `frames` when given.
  Matrix decode(const Matrix& latent, int frames = -1);

  int codebook_count() const { return static_cast<int>(codebooks_.size()); }
  Codebook& codebook(int layer);
  const Codebook& codebook(int layer) const;
  CodebookFor codebook_for() const;

  QuantizeResult quantize_latent(const Matrix& f) const;
  QuantizedMotion tokenize(const Matrix& feat);
  Matrix decode_tokens(const QuantizedMotion& q, int frames = -1, int upto = -1);
  Matrix reconstruct(const Matrix& feat);

  /// Training objective averaged over equal-length clips whose length is a
  /// multiple of the downscale factor.
  VqLosses loss(const std::vector<Matrix>& clips);
  VqLosses loss(const Matrix& clip) { return loss(std::vector<Matrix>{clip}); }

  /// Seeds uninitialized codebooks from encoder outputs of `clips`.
  void initialize_codebooks(const std::vector<Matrix>& clips, Rng& rng);

  void save(const std::filesystem::path& dir, const motion::NormalizationStats* norm,
            const nlohmann::json& stats = nlohmann::json::object());
  static std::unique_ptr<VqModel> load(const std::filesystem::path& dir, motion::NormalizationStats* norm = nullptr,
                                       nlohmann::json* stats = nullptr);

 private:
  VqConfig cfg_;
  nn::Conv1d enc_in_, enc_out_;
  std::vector<nn::Conv1d> enc_down_;
  std::vector<std::vector<ResBlock>> enc_blocks_;
  nn::Conv1d dec_in_, dec_mid_, dec_out_;
  std::vector<nn::Conv1d> dec_up_;
  std::vector<std::vector<ResBlock>> dec_blocks_;
  std::vector<Codebook> codebooks_;  // one shared, or one per layer
};

}  // namespace msm::vq

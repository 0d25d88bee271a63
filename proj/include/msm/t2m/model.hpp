#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "msm/core/config.hpp"
#include "msm/nn/layers.hpp"
#include "msm/t2m/masking.hpp"
#include "msm/t2m/text.hpp"

namespace msm::t2m {

enum class Conditioning { in_context, cross_attention };

const char* conditioning_name(Conditioning c);

struct T2mConfig {
  int layers = 8;
  int ff = 1024;
  int dim = 384;
  int heads = 6;
  double dropout = 0.2;
  Conditioning conditioning = Conditioning::in_context;
  double cfg_dropout = 0.1;
  double cfg_scale = 5.0;
  int iterations = 10;
  double temperature = 1.0;  // Gumbel noise scale at the first iteration
  int codebook_size = 512;
  int text_dim = 300;
  int max_positions = 256;  // per-scale position table size
  int max_scales = 16;

  void validate() const;
  nlohmann::json to_json() const;
  static T2mConfig from_json(const nlohmann::json& j);
  void read(ConfigReader& r);
};

/// One sequence in a forward batch. A null `text` selects the learned
/// unconditional embedding.
struct T2mInput {
  const FlatTokenSequence* tokens = nullptr;
  const Matrix* text = nullptr;
};

class T2mModel {
 public:
  T2mModel(const T2mConfig& cfg, std::uint64_t seed);

  const T2mConfig& config() const { return cfg_; }
  std::vector<nn::Parameter*> parameters();

  /// Logits for every batch element stacked by rows: element b occupies rows
  /// [b * n_max, b * n_max + n_b) where n_max is the longest token sequence.
  /// Rows past n_b belong to padding.
  nn::Var forward(const std::vector<T2mInput>& batch, const nn::Context& ctx = {});

  /// Inference logits (N x K) for one sequence.
  Matrix logits(const FlatTokenSequence& tokens, const Matrix* text);
  /// Conditional and unconditional logits from one batched pass.
  std::pair<Matrix, Matrix> guided_pair(const FlatTokenSequence& tokens, const Matrix& text);

  /// Mean cross-entropy over the selected positions of all elements.
  nn::Var masked_loss(const std::vector<Corruption>& corrupted, const std::vector<const Matrix*>& texts,
                      const nn::Context& ctx = {});

  void save(const std::filesystem::path& dir, const ToyTextEmbedder* embedder,
            const nlohmann::json& stats = nlohmann::json::object());
  /// Refuses a checkpoint whose conditioning differs from `expected` when given.
  static std::unique_ptr<T2mModel> load(const std::filesystem::path& dir, ToyTextEmbedder* embedder = nullptr,
                                        nlohmann::json* stats = nullptr,
                                        std::optional<Conditioning> expected = std::nullopt);

 private:
  T2mConfig cfg_;
  nn::Embedding token_emb_, scale_emb_, pos_emb_;
  nn::Linear text_proj_;
  nn::Parameter null_text_;
  nn::Parameter separator_;
  std::vector<nn::TransformerLayer> blocks_;
  nn::LayerNorm final_norm_;
  nn::Linear head_;
};

}  // namespace msm::t2m

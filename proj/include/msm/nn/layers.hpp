#pragma once

#include <functional>
#include <string>
#include <vector>

#include "msm/nn/autograd.hpp"

namespace msm::nn {

using ParamVisitor = std::function<void(Parameter&)>;

/// Forward-pass context: training toggles dropout; rng feeds it.
struct Context {
  bool training = false;
  Rng* rng = nullptr;
};

Matrix uniform_init(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng);
Matrix normal_init(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng);

class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, Eigen::Index in, Eigen::Index out, Rng& rng, bool with_bias = true);

  Var forward(const Var& x);
  void visit(const ParamVisitor& f);
  Eigen::Index in_features() const { return weight_.value.rows(); }
  Eigen::Index out_features() const { return weight_.value.cols(); }

 private:
  Parameter weight_;
  Parameter bias_;
  bool with_bias_ = true;
};

class Conv1d {
 public:
  Conv1d() = default;
  Conv1d(const std::string& name, Eigen::Index in, Eigen::Index out, int kernel, int stride, int padding, int dilation,
         Rng& rng);

  Var forward(const Var& x, int segments = 1);
  void visit(const ParamVisitor& f);

 private:
  Parameter weight_;
  Parameter bias_;
  int kernel_ = 1, stride_ = 1, padding_ = 0, dilation_ = 1;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(const std::string& name, Eigen::Index width);
  Var forward(const Var& x);
  void visit(const ParamVisitor& f);

 private:
  Parameter gamma_;
  Parameter beta_;
};

class Embedding {
 public:
  Embedding() = default;
  Embedding(const std::string& name, Eigen::Index count, Eigen::Index width, Rng& rng, double stddev = 0.02);
  Var forward(const std::vector<int>& ids);
  Var table();
  void visit(const ParamVisitor& f);
  Eigen::Index count() const { return table_.value.rows(); }

 private:
  Parameter table_;
};

class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(const std::string& name, Eigen::Index dim, int heads, Rng& rng);
  Var forward(const Var& query, const Var& context, const std::vector<char>& key_valid = {}, int segments = 1);
  void visit(const ParamVisitor& f);

 private:
  Linear q_, k_, v_, o_;
  int heads_ = 1;
};

/// Pre-norm transformer layer, optionally with a cross-attention sublayer.
/// With segments > 1, x and memory each hold that many equal-length
/// sequences stacked by rows.
class TransformerLayer {
 public:
  TransformerLayer() = default;
  TransformerLayer(const std::string& name, Eigen::Index dim, int heads, Eigen::Index ff, double dropout,
                   bool cross_attention, Rng& rng);

  Var forward(const Var& x, const std::vector<char>& key_valid, const Context& ctx, const Var& memory = {},
              const std::vector<char>& memory_valid = {}, int segments = 1);
  void visit(const ParamVisitor& f);

 private:
  LayerNorm ln_self_, ln_cross_, ln_ff_;
  MultiHeadAttention self_attn_, cross_attn_;
  Linear ff1_, ff2_;
  double dropout_ = 0.0;
  bool has_cross_ = false;
};

/// Sinusoidal position table (rows = positions).
Matrix sinusoidal_positions(Eigen::Index length, Eigen::Index dim);

}  // namespace msm::nn

#include "msm/nn/layers.hpp"

#include <cmath>

#include "msm/core/error.hpp"

namespace msm::nn {

Matrix uniform_init(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-bound, bound);
  return m;
}

Matrix normal_init(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = stddev * rng.normal();
  return m;
}

Linear::Linear(const std::string& name, Eigen::Index in, Eigen::Index out, Rng& rng, bool with_bias)
    : with_bias_(with_bias) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  weight_ = Parameter(name + ".weight", uniform_init(in, out, bound, rng));
  if (with_bias_) bias_ = Parameter(name + ".bias", uniform_init(1, out, bound, rng));
}

Var Linear::forward(const Var& x) {
  Var y = matmul(x, param(weight_));
  return with_bias_ ? add_row(y, param(bias_)) : y;
}

void Linear::visit(const ParamVisitor& f) {
  f(weight_);
  if (with_bias_) f(bias_);
}

Conv1d::Conv1d(const std::string& name, Eigen::Index in, Eigen::Index out, int kernel, int stride, int padding,
               int dilation, Rng& rng)
    : kernel_(kernel), stride_(stride), padding_(padding), dilation_(dilation) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in * kernel));
  weight_ = Parameter(name + ".weight", uniform_init(kernel * in, out, bound, rng));
  bias_ = Parameter(name + ".bias", uniform_init(1, out, bound, rng));
}

Var Conv1d::forward(const Var& x, int segments) {
  return conv1d(x, param(weight_), param(bias_), kernel_, stride_, padding_, dilation_, segments);
}

void Conv1d::visit(const ParamVisitor& f) {
  f(weight_);
  f(bias_);
}

LayerNorm::LayerNorm(const std::string& name, Eigen::Index width)
    : gamma_(name + ".gamma", Matrix::Ones(1, width)), beta_(name + ".beta", Matrix::Zero(1, width)) {}

Var LayerNorm::forward(const Var& x) { return layer_norm(x, param(gamma_), param(beta_)); }

void LayerNorm::visit(const ParamVisitor& f) {
  f(gamma_);
  f(beta_);
}

Embedding::Embedding(const std::string& name, Eigen::Index count, Eigen::Index width, Rng& rng, double stddev)
    : table_(name + ".table", normal_init(count, width, stddev, rng)) {}

Var Embedding::forward(const std::vector<int>& ids) { return gather_rows(param(table_), ids); }
Var Embedding::table() { return param(table_); }
void Embedding::visit(const ParamVisitor& f) { f(table_); }

MultiHeadAttention::MultiHeadAttention(const std::string& name, Eigen::Index dim, int heads, Rng& rng)
    : q_(name + ".q", dim, dim, rng),
      k_(name + ".k", dim, dim, rng),
      v_(name + ".v", dim, dim, rng),
      o_(name + ".o", dim, dim, rng),
      heads_(heads) {
  require(dim % heads == 0, "attention width must be divisible by the head count", ErrorKind::config);
}

Var MultiHeadAttention::forward(const Var& query, const Var& context, const std::vector<char>& key_valid,
                                int segments) {
  return o_.forward(
      attention(q_.forward(query), k_.forward(context), v_.forward(context), heads_, key_valid, segments));
}

void MultiHeadAttention::visit(const ParamVisitor& f) {
  q_.visit(f);
  k_.visit(f);
  v_.visit(f);
  o_.visit(f);
}

TransformerLayer::TransformerLayer(const std::string& name, Eigen::Index dim, int heads, Eigen::Index ff,
                                   double dropout, bool cross_attention, Rng& rng)
    : ln_self_(name + ".ln_self", dim),
      ln_ff_(name + ".ln_ff", dim),
      self_attn_(name + ".self", dim, heads, rng),
      ff1_(name + ".ff1", dim, ff, rng),
      ff2_(name + ".ff2", ff, dim, rng),
      dropout_(dropout),
      has_cross_(cross_attention) {
  if (has_cross_) {
    ln_cross_ = LayerNorm(name + ".ln_cross", dim);
    cross_attn_ = MultiHeadAttention(name + ".cross", dim, heads, rng);
  }
}

Var TransformerLayer::forward(const Var& x, const std::vector<char>& key_valid, const Context& ctx,
                              const Var& memory, const std::vector<char>& memory_valid, int segments) {
  auto drop = [&](const Var& v) { return ctx.training && ctx.rng ? dropout(v, dropout_, *ctx.rng) : v; };
  Var h = ln_self_.forward(x);
  Var y = add(x, drop(self_attn_.forward(h, h, key_valid, segments)));
  if (has_cross_) {
    require(static_cast<bool>(memory), "cross-attention layer needs a memory sequence");
    y = add(y, drop(cross_attn_.forward(ln_cross_.forward(y), memory, memory_valid, segments)));
  }
  Var f = ff2_.forward(drop(gelu(ff1_.forward(ln_ff_.forward(y)))));
  return add(y, drop(f));
}

void TransformerLayer::visit(const ParamVisitor& f) {
  ln_self_.visit(f);
  self_attn_.visit(f);
  if (has_cross_) {
    ln_cross_.visit(f);
    cross_attn_.visit(f);
  }
  ln_ff_.visit(f);
  ff1_.visit(f);
  ff2_.visit(f);
}

Matrix sinusoidal_positions(Eigen::Index length, Eigen::Index dim) {
  Matrix pe(length, dim);
  for (Eigen::Index p = 0; p < length; ++p) {
    for (Eigen::Index i = 0; i < dim; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(dim));
      pe(p, i) = (i % 2 == 0) ? std::sin(static_cast<double>(p) * freq) : std::cos(static_cast<double>(p) * freq);
    }
  }
  return pe;
}

}  // namespace msm::nn

#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "msm/core/rng.hpp"
#include "msm/core/types.hpp"

namespace msm::nn {

/// Trainable tensor plus its accumulated gradient and Adam moments.
struct Parameter {
  Parameter() = default;
  Parameter(std::string n, Matrix init) : name(std::move(n)), value(std::move(init)) {}

  std::string name;
  Matrix value;
  Matrix grad;
  Matrix adam_m;
  Matrix adam_v;

  void zero_grad() {
    if (grad.size() == 0) grad = Matrix::Zero(value.rows(), value.cols());
    else grad.setZero();
  }
};

struct Node {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  Parameter* param = nullptr;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  Matrix& grad_ref() {
    if (grad.size() == 0) grad = Matrix::Zero(value.rows(), value.cols());
    return grad;
  }
};

/// Handle to a node in the dynamic computation graph. Graphs are rebuilt on
/// every forward pass and released when the last handle goes away.
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  const Matrix& value() const { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  bool requires_grad() const { return node_->requires_grad; }
  double item() const { return node_->value(0, 0); }
  const std::shared_ptr<Node>& node() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<Node> node_;
};

Var constant(Matrix m);
/// Leaf that records its own gradient (used for inputs under test).
Var leaf(Matrix m);
/// Leaf bound to a parameter: backward() adds into `p.grad`.
Var param(Parameter& p);

/// Reverse-mode sweep from a 1x1 `loss`. Parameter leaves receive their
/// gradients in Parameter::grad (accumulated, not overwritten).
void backward(const Var& loss);

// -- elementwise / structural ------------------------------------------------
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var add_row(const Var& a, const Var& row);  // broadcast 1xC over rows
Var relu(const Var& a);
Var gelu(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var square(const Var& a);
Var transpose(const Var& a);
Var detach(const Var& a);

Var matmul(const Var& a, const Var& b);
/// a * b^T
Var matmul_nt(const Var& a, const Var& b);

Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);
Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count);
Var gather_rows(const Var& table, const std::vector<int>& indices);
Var upsample_rows(const Var& a, int factor);
Var mean_rows(const Var& a);  // -> 1xC

Var softmax_rows(const Var& a);
Var log_softmax_rows(const Var& a);
Var row_l2_normalize(const Var& a, double eps = 1e-8);
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);

Var dropout(const Var& a, double p, Rng& rng);

// -- reductions / losses (all return 1x1) ------------------------------------
Var sum(const Var& a);
Var mean(const Var& a);
/// Mean SmoothL1 (Huber with beta 1) of a - b.
Var smooth_l1(const Var& a, const Var& b);
Var mse(const Var& a, const Var& b);
/// Sum over rows r with targets[r] >= 0 of -log softmax(logits)[r, targets[r]].
Var cross_entropy_sum(const Var& logits, const std::vector<int>& targets);

// -- sequence layers ----------------------------------------------------------
/// Applies a constant matrix to each of `segments` equal row blocks of x:
/// block g of the result is m * x_g.
Var block_matmul(const Matrix& m, const Var& x, int segments);

/// 1-D convolution over time. x: T x Cin, weight: (kernel*Cin) x Cout laid
/// out tap-major, bias: 1 x Cout. With segments > 1 the rows hold that many
/// equal-length sequences stacked, each convolved on its own.
Var conv1d(const Var& x, const Var& weight, const Var& bias, int kernel, int stride, int padding, int dilation,
           int segments = 1);

/// Fused scaled dot-product multi-head attention. key_valid (size Tk, or
/// empty for all-valid) excludes keys such as padding. With segments > 1,
/// queries and keys are split into that many equal blocks that only attend
/// within themselves.
Var attention(const Var& q, const Var& k, const Var& v, int heads, const std::vector<char>& key_valid = {},
              int segments = 1);

}  // namespace msm::nn

#include "msm/nn/autograd.hpp"

#include <cmath>
#include <limits>
#include <unordered_set>

#include "msm/core/error.hpp"

namespace msm::nn {
namespace {

using NodePtr = std::shared_ptr<Node>;

Var make(Matrix value, std::vector<Var> inputs, std::function<void(Node&)> bw) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  for (const Var& in : inputs) {
    if (in.requires_grad()) n->requires_grad = true;
  }
  if (n->requires_grad) {
    n->parents.reserve(inputs.size());
    for (const Var& in : inputs) n->parents.push_back(in.node());
    n->backward = std::move(bw);
  }
  return Var(std::move(n));
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    fail(ErrorKind::invalid_argument, std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                                          std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                                          std::to_string(b.cols()));
  }
}

inline void accumulate(const NodePtr& p, const Matrix& g) {
  if (p->requires_grad) p->grad_ref() += g;
}

}  // namespace

Var constant(Matrix m) {
  auto n = std::make_shared<Node>();
  n->value = std::move(m);
  return Var(std::move(n));
}

Var leaf(Matrix m) {
  auto n = std::make_shared<Node>();
  n->value = std::move(m);
  n->requires_grad = true;
  return Var(std::move(n));
}

Var param(Parameter& p) {
  auto n = std::make_shared<Node>();
  n->value = p.value;
  n->requires_grad = true;
  n->param = &p;
  return Var(std::move(n));
}

void backward(const Var& loss) {
  require(loss.rows() == 1 && loss.cols() == 1, "backward: loss must be a scalar");
  if (!loss.requires_grad()) return;

  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* child = node->parents[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->grad_ref().setConstant(1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->grad.size() == 0) continue;
    if (n->backward) n->backward(*n);
    if (n->param) {
      Parameter& p = *n->param;
      if (p.grad.size() == 0) p.grad = Matrix::Zero(p.value.rows(), p.value.cols());
      p.grad += n->grad;
    }
  }
}

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  return make(a.value() + b.value(), {a, b}, [](Node& s) {
    accumulate(s.parents[0], s.grad);
    accumulate(s.parents[1], s.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  return make(a.value() - b.value(), {a, b}, [](Node& s) {
    accumulate(s.parents[0], s.grad);
    if (s.parents[1]->requires_grad) s.parents[1]->grad_ref() -= s.grad;
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  return make(a.value().cwiseProduct(b.value()), {a, b}, [](Node& s) {
    const auto& pa = s.parents[0];
    const auto& pb = s.parents[1];
    if (pa->requires_grad) pa->grad_ref() += s.grad.cwiseProduct(pb->value);
    if (pb->requires_grad) pb->grad_ref() += s.grad.cwiseProduct(pa->value);
  });
}

Var scale(const Var& a, double k) {
  return make(a.value() * k, {a}, [k](Node& s) { accumulate(s.parents[0], s.grad * k); });
}

Var add_scalar(const Var& a, double k) {
  return make(a.value().array() + k, {a}, [](Node& s) { accumulate(s.parents[0], s.grad); });
}

Var add_row(const Var& a, const Var& row) {
  require(row.rows() == 1 && row.cols() == a.cols(), "add_row: row must be 1 x cols");
  Matrix out = a.value();
  out.rowwise() += row.value().row(0);
  return make(std::move(out), {a, row}, [](Node& s) {
    accumulate(s.parents[0], s.grad);
    if (s.parents[1]->requires_grad) s.parents[1]->grad_ref() += s.grad.colwise().sum();
  });
}

Var relu(const Var& a) {
  return make(a.value().cwiseMax(0.0), {a}, [](Node& s) {
    const auto& p = s.parents[0];
    p->grad_ref() += (p->value.array() > 0.0).select(s.grad, 0.0);
  });
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
}

Var gelu(const Var& a) {
  const Matrix& x = a.value();
  Matrix out = x.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::tanh(kGeluC * (v + 0.044715 * v * v * v))); });
  return make(std::move(out), {a}, [](Node& s) {
    const auto& p = s.parents[0];
    Matrix d = p->value.unaryExpr([](double v) {
      const double u = kGeluC * (v + 0.044715 * v * v * v);
      const double t = std::tanh(u);
      const double du = kGeluC * (1.0 + 3.0 * 0.044715 * v * v);
      return 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du;
    });
    p->grad_ref() += s.grad.cwiseProduct(d);
  });
}

Var exp(const Var& a) {
  Matrix out = a.value().array().exp();
  return make(out, {a}, [out](Node& s) { accumulate(s.parents[0], s.grad.cwiseProduct(out)); });
}

Var log(const Var& a) {
  return make(a.value().array().log(), {a}, [](Node& s) {
    const auto& p = s.parents[0];
    p->grad_ref() += s.grad.cwiseQuotient(p->value);
  });
}

Var square(const Var& a) {
  return make(a.value().array().square(), {a}, [](Node& s) {
    const auto& p = s.parents[0];
    p->grad_ref() += 2.0 * s.grad.cwiseProduct(p->value);
  });
}

Var transpose(const Var& a) {
  return make(a.value().transpose(), {a}, [](Node& s) { accumulate(s.parents[0], s.grad.transpose()); });
}

Var detach(const Var& a) { return constant(a.value()); }

Var matmul(const Var& a, const Var& b) {
  require(a.cols() == b.rows(), "matmul: inner dimensions differ");
  Matrix out = a.value() * b.value();
  return make(std::move(out), {a, b}, [](Node& s) {
    const auto& pa = s.parents[0];
    const auto& pb = s.parents[1];
    if (pa->requires_grad) pa->grad_ref().noalias() += s.grad * pb->value.transpose();
    if (pb->requires_grad) pb->grad_ref().noalias() += pa->value.transpose() * s.grad;
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  require(a.cols() == b.cols(), "matmul_nt: inner dimensions differ");
  Matrix out = a.value() * b.value().transpose();
  return make(std::move(out), {a, b}, [](Node& s) {
    const auto& pa = s.parents[0];
    const auto& pb = s.parents[1];
    if (pa->requires_grad) pa->grad_ref().noalias() += s.grad * pb->value;
    if (pb->requires_grad) pb->grad_ref().noalias() += s.grad.transpose() * pa->value;
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_rows: no inputs");
  Eigen::Index rows = 0;
  const Eigen::Index cols = parts.front().cols();
  for (const Var& p : parts) {
    require(p.cols() == cols, "concat_rows: column mismatch");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  Eigen::Index r = 0;
  for (const Var& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  return make(std::move(out), parts, [](Node& s) {
    Eigen::Index r0 = 0;
    for (const auto& p : s.parents) {
      if (p->requires_grad) p->grad_ref() += s.grad.middleRows(r0, p->value.rows());
      r0 += p->value.rows();
    }
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    require(p.rows() == rows, "concat_cols: row mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Eigen::Index c = 0;
  for (const Var& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  return make(std::move(out), parts, [](Node& s) {
    Eigen::Index c0 = 0;
    for (const auto& p : s.parents) {
      if (p->requires_grad) p->grad_ref() += s.grad.middleCols(c0, p->value.cols());
      c0 += p->value.cols();
    }
  });
}

Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count) {
  require(start >= 0 && count >= 0 && start + count <= a.rows(), "slice_rows: out of range");
  return make(a.value().middleRows(start, count), {a}, [start, count](Node& s) {
    s.parents[0]->grad_ref().middleRows(start, count) += s.grad;
  });
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  require(start >= 0 && count >= 0 && start + count <= a.cols(), "slice_cols: out of range");
  return make(a.value().middleCols(start, count), {a}, [start, count](Node& s) {
    s.parents[0]->grad_ref().middleCols(start, count) += s.grad;
  });
}

Var gather_rows(const Var& table, const std::vector<int>& indices) {
  Matrix out(static_cast<Eigen::Index>(indices.size()), table.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    require(indices[i] >= 0 && indices[i] < table.rows(), "gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(i)) = table.value().row(indices[i]);
  }
  return make(std::move(out), {table}, [indices](Node& s) {
    Matrix& g = s.parents[0]->grad_ref();
    for (std::size_t i = 0; i < indices.size(); ++i) g.row(indices[i]) += s.grad.row(static_cast<Eigen::Index>(i));
  });
}

Var upsample_rows(const Var& a, int factor) {
  require(factor >= 1, "upsample_rows: factor must be >= 1");
  Matrix out(a.rows() * factor, a.cols());
  for (Eigen::Index r = 0; r < out.rows(); ++r) out.row(r) = a.value().row(r / factor);
  return make(std::move(out), {a}, [factor](Node& s) {
    Matrix& g = s.parents[0]->grad_ref();
    for (Eigen::Index r = 0; r < s.grad.rows(); ++r) g.row(r / factor) += s.grad.row(r);
  });
}

Var mean_rows(const Var& a) {
  const double n = static_cast<double>(a.rows());
  return make(a.value().colwise().mean(), {a}, [n](Node& s) {
    Matrix& g = s.parents[0]->grad_ref();
    g.rowwise() += s.grad.row(0) / n;
  });
}

namespace {

Matrix softmax_of(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    out.row(r) = (x.row(r).array() - m).exp();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

Matrix log_softmax_of(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    const double lse = m + std::log((x.row(r).array() - m).exp().sum());
    out.row(r) = x.row(r).array() - lse;
  }
  return out;
}

}  // namespace

Var softmax_rows(const Var& a) {
  Matrix y = softmax_of(a.value());
  return make(y, {a}, [y](Node& s) {
    Matrix g = s.grad.cwiseProduct(y);
    const Eigen::VectorXd dots = g.rowwise().sum();
    g -= (y.array().colwise() * dots.array()).matrix();
    s.parents[0]->grad_ref() += g;
  });
}

Var log_softmax_rows(const Var& a) {
  Matrix y = log_softmax_of(a.value());
  return make(y, {a}, [y](Node& s) {
    const Matrix p = y.array().exp();
    const Eigen::VectorXd gsum = s.grad.rowwise().sum();
    s.parents[0]->grad_ref() += s.grad - (p.array().colwise() * gsum.array()).matrix();
  });
}

Var row_l2_normalize(const Var& a, double eps) {
  const Eigen::VectorXd norms = a.value().rowwise().norm().array() + eps;
  Matrix y = a.value().array().colwise() / norms.array();
  return make(y, {a}, [y, norms](Node& s) {
    // d/dx (x/|x|) = (I - y y^T) / |x|
    const Eigen::VectorXd dots = s.grad.cwiseProduct(y).rowwise().sum();
    Matrix g = s.grad - (y.array().colwise() * dots.array()).matrix();
    g = g.array().colwise() / norms.array();
    s.parents[0]->grad_ref() += g;
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const Eigen::Index C = x.cols();
  require(gamma.cols() == C && beta.cols() == C, "layer_norm: affine width mismatch");
  const Matrix& xv = x.value();
  Eigen::VectorXd inv_std(xv.rows());
  Matrix xhat(xv.rows(), C);
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    const double mu = xv.row(r).mean();
    const double var = (xv.row(r).array() - mu).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (xv.row(r).array() - mu) * inv_std(r);
  }
  Matrix out = xhat.array().rowwise() * gamma.value().row(0).array();
  out.rowwise() += beta.value().row(0);
  return make(std::move(out), {x, gamma, beta}, [xhat, inv_std](Node& s) {
    const auto& px = s.parents[0];
    const auto& pg = s.parents[1];
    const auto& pb = s.parents[2];
    if (pg->requires_grad) pg->grad_ref() += s.grad.cwiseProduct(xhat).colwise().sum();
    if (pb->requires_grad) pb->grad_ref() += s.grad.colwise().sum();
    if (px->requires_grad) {
      const Matrix dxhat = s.grad.array().rowwise() * pg->value.row(0).array();
      const Eigen::VectorXd m1 = dxhat.rowwise().mean();
      const Eigen::VectorXd m2 = dxhat.cwiseProduct(xhat).rowwise().mean();
      Matrix dx = dxhat;
      dx.colwise() -= m1;
      dx -= (xhat.array().colwise() * m2.array()).matrix();
      dx = dx.array().colwise() * inv_std.array();
      px->grad_ref() += dx;
    }
  });
}

Var dropout(const Var& a, double p, Rng& rng) {
  if (p <= 0.0) return a;
  Matrix mask(a.rows(), a.cols());
  const double keep = 1.0 - p;
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = rng.uniform() < keep ? 1.0 / keep : 0.0;
  return mul(a, constant(std::move(mask)));
}

Var sum(const Var& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return make(std::move(out), {a}, [](Node& s) { s.parents[0]->grad_ref().array() += s.grad(0, 0); });
}

Var mean(const Var& a) {
  Matrix out(1, 1);
  const double n = static_cast<double>(a.value().size());
  out(0, 0) = a.value().sum() / n;
  return make(std::move(out), {a}, [n](Node& s) { s.parents[0]->grad_ref().array() += s.grad(0, 0) / n; });
}

Var smooth_l1(const Var& a, const Var& b) {
  check_same_shape(a, b, "smooth_l1");
  const Matrix d = a.value() - b.value();
  const double n = static_cast<double>(d.size());
  Matrix out(1, 1);
  out(0, 0) = d.unaryExpr([](double v) { return std::abs(v) < 1.0 ? 0.5 * v * v : std::abs(v) - 0.5; }).sum() / n;
  return make(std::move(out), {a, b}, [d, n](Node& s) {
    const Matrix g = d.unaryExpr([](double v) { return std::abs(v) < 1.0 ? v : (v > 0 ? 1.0 : -1.0); }) *
                     (s.grad(0, 0) / n);
    accumulate(s.parents[0], g);
    if (s.parents[1]->requires_grad) s.parents[1]->grad_ref() -= g;
  });
}

Var mse(const Var& a, const Var& b) {
  check_same_shape(a, b, "mse");
  const Matrix d = a.value() - b.value();
  const double n = static_cast<double>(d.size());
  Matrix out(1, 1);
  out(0, 0) = d.squaredNorm() / n;
  return make(std::move(out), {a, b}, [d, n](Node& s) {
    const Matrix g = d * (2.0 * s.grad(0, 0) / n);
    accumulate(s.parents[0], g);
    if (s.parents[1]->requires_grad) s.parents[1]->grad_ref() -= g;
  });
}

Var cross_entropy_sum(const Var& logits, const std::vector<int>& targets) {
  require(static_cast<Eigen::Index>(targets.size()) == logits.rows(), "cross_entropy_sum: one target per row");
  const Matrix lsm = log_softmax_of(logits.value());
  Matrix out(1, 1);
  out(0, 0) = 0.0;
  for (std::size_t r = 0; r < targets.size(); ++r) {
    if (targets[r] < 0) continue;
    require(targets[r] < logits.cols(), "cross_entropy_sum: target out of range");
    out(0, 0) -= lsm(static_cast<Eigen::Index>(r), targets[r]);
  }
  return make(std::move(out), {logits}, [lsm, targets](Node& s) {
    Matrix& g = s.parents[0]->grad_ref();
    const double up = s.grad(0, 0);
    for (std::size_t r = 0; r < targets.size(); ++r) {
      if (targets[r] < 0) continue;
      const auto row = static_cast<Eigen::Index>(r);
      g.row(row) += up * lsm.row(row).array().exp().matrix();
      g(row, targets[r]) -= up;
    }
  });
}

Var block_matmul(const Matrix& m, const Var& x, int segments) {
  require(segments >= 1 && x.rows() % segments == 0, "block_matmul: rows not divisible into segments");
  const Eigen::Index in = x.rows() / segments;
  require(m.cols() == in, "block_matmul: shape mismatch");
  const Eigen::Index out_rows = m.rows();
  Matrix out(out_rows * segments, x.cols());
  for (int g = 0; g < segments; ++g) out.middleRows(g * out_rows, out_rows).noalias() = m * x.value().middleRows(g * in, in);
  return make(std::move(out), {x}, [m, in, out_rows, segments](Node& s) {
    const auto& px = s.parents[0];
    if (!px->requires_grad) return;
    Matrix& gx = px->grad_ref();
    for (int g = 0; g < segments; ++g) {
      gx.middleRows(g * in, in).noalias() += m.transpose() * s.grad.middleRows(g * out_rows, out_rows);
    }
  });
}

Var conv1d(const Var& x, const Var& weight, const Var& bias, int kernel, int stride, int padding, int dilation,
           int segments) {
  const Eigen::Index cin = x.cols();
  require(segments >= 1 && x.rows() % segments == 0, "conv1d: rows not divisible into segments");
  const Eigen::Index T = x.rows() / segments;
  require(weight.rows() == kernel * cin, "conv1d: weight rows must be kernel * in_channels");
  require(bias.rows() == 1 && bias.cols() == weight.cols(), "conv1d: bias must be 1 x out_channels");
  const Eigen::Index span = static_cast<Eigen::Index>(dilation) * (kernel - 1) + 1;
  const Eigen::Index tout = (T + 2 * padding - span) / stride + 1;
  require(tout >= 1, "conv1d: input shorter than receptive field");

  // Each segment is convolved independently; im2col rows are stacked.
  Matrix col = Matrix::Zero(tout * segments, kernel * cin);
  for (int g = 0; g < segments; ++g) {
    for (Eigen::Index t = 0; t < tout; ++t) {
      for (int j = 0; j < kernel; ++j) {
        const Eigen::Index src = t * stride - padding + static_cast<Eigen::Index>(j) * dilation;
        if (src >= 0 && src < T) col.block(g * tout + t, j * cin, 1, cin) = x.value().row(g * T + src);
      }
    }
  }
  Matrix out = col * weight.value();
  out.rowwise() += bias.value().row(0);
  return make(std::move(out), {x, weight, bias},
              [col = std::move(col), T, tout, cin, kernel, stride, padding, dilation, segments](Node& s) {
                const auto& px = s.parents[0];
                const auto& pw = s.parents[1];
                const auto& pb = s.parents[2];
                if (pw->requires_grad) pw->grad_ref().noalias() += col.transpose() * s.grad;
                if (pb->requires_grad) pb->grad_ref() += s.grad.colwise().sum();
                if (px->requires_grad) {
                  const Matrix dcol = s.grad * pw->value.transpose();
                  Matrix& gx = px->grad_ref();
                  for (int g = 0; g < segments; ++g) {
                    for (Eigen::Index t = 0; t < tout; ++t) {
                      for (int j = 0; j < kernel; ++j) {
                        const Eigen::Index src = t * stride - padding + static_cast<Eigen::Index>(j) * dilation;
                        if (src >= 0 && src < T) gx.row(g * T + src) += dcol.block(g * tout + t, j * cin, 1, cin);
                      }
                    }
                  }
                }
              });
}

Var attention(const Var& q, const Var& k, const Var& v, int heads, const std::vector<char>& key_valid, int segments) {
  const Eigen::Index D = q.cols();
  require(k.cols() == D && v.cols() == D, "attention: width mismatch");
  require(k.rows() == v.rows(), "attention: key/value length mismatch");
  require(heads >= 1 && D % heads == 0, "attention: width not divisible by heads");
  require(segments >= 1 && q.rows() % segments == 0 && k.rows() % segments == 0,
          "attention: rows not divisible into segments");
  require(key_valid.empty() || static_cast<Eigen::Index>(key_valid.size()) == k.rows(),
          "attention: mask length mismatch");
  const Eigen::Index Tq = q.rows() / segments;
  const Eigen::Index Tk = k.rows() / segments;
  const Eigen::Index dh = D / heads;
  const double sc = 1.0 / std::sqrt(static_cast<double>(dh));

  // probs[g * heads + h] is Tq x Tk for segment g, head h.
  std::vector<Matrix> probs(static_cast<std::size_t>(heads * segments));
  Matrix out(q.rows(), D);
  for (int g = 0; g < segments; ++g) {
    for (int h = 0; h < heads; ++h) {
      Matrix S = (q.value().block(g * Tq, h * dh, Tq, dh) * k.value().block(g * Tk, h * dh, Tk, dh).transpose()) * sc;
      if (!key_valid.empty()) {
        for (Eigen::Index j = 0; j < Tk; ++j) {
          if (!key_valid[static_cast<std::size_t>(g * Tk + j)]) {
            S.col(j).setConstant(-std::numeric_limits<double>::infinity());
          }
        }
      }
      Matrix P = softmax_of(S);
      out.block(g * Tq, h * dh, Tq, dh).noalias() = P * v.value().block(g * Tk, h * dh, Tk, dh);
      probs[static_cast<std::size_t>(g * heads + h)] = std::move(P);
    }
  }
  return make(std::move(out), {q, k, v}, [probs = std::move(probs), heads, segments, Tq, Tk, dh, sc](Node& s) {
    const auto& pq = s.parents[0];
    const auto& pk = s.parents[1];
    const auto& pv = s.parents[2];
    for (int g = 0; g < segments; ++g) {
      for (int h = 0; h < heads; ++h) {
        const Matrix& P = probs[static_cast<std::size_t>(g * heads + h)];
        const auto dO = s.grad.block(g * Tq, h * dh, Tq, dh);
        if (pv->requires_grad) pv->grad_ref().block(g * Tk, h * dh, Tk, dh).noalias() += P.transpose() * dO;
        if (!pq->requires_grad && !pk->requires_grad) continue;
        Matrix dP = dO * pv->value.block(g * Tk, h * dh, Tk, dh).transpose();
        const Eigen::VectorXd dots = dP.cwiseProduct(P).rowwise().sum();
        dP.colwise() -= dots;
        const Matrix dS = P.cwiseProduct(dP) * sc;
        if (pq->requires_grad) {
          pq->grad_ref().block(g * Tq, h * dh, Tq, dh).noalias() += dS * pk->value.block(g * Tk, h * dh, Tk, dh);
        }
        if (pk->requires_grad) {
          pk->grad_ref().block(g * Tk, h * dh, Tk, dh).noalias() +=
              dS.transpose() * pq->value.block(g * Tq, h * dh, Tq, dh);
        }
      }
    }
  });
}

}  // namespace msm::nn

#include "msm/t2m/masking.hpp"

#include <cmath>
#include <numeric>

#include "msm/core/error.hpp"

namespace msm::t2m {

double mask_schedule(double tau) {
  require(tau >= 0.0 && tau <= 1.0, "mask schedule progress must lie in [0, 1]");
  if (tau == 0.0) return 1.0;
  if (tau == 1.0) return 0.0;
  return std::cos(M_PI * tau / 2.0);
}

int masked_count(double tau, int n) {
  require(n >= 0, "token count must be >= 0");
  const double x = mask_schedule(tau) * n;
  const double r = std::round(x);
  return static_cast<int>(std::abs(x - r) < 1e-9 ? r : std::ceil(x));
}

FlatTokenSequence FlatTokenSequence::from_quantized(const vq::QuantizedMotion& q) {
  FlatTokenSequence f;
  for (std::size_t v = 0; v < q.token_seqs.size(); ++v) {
    for (std::size_t i = 0; i < q.token_seqs[v].size(); ++i) {
      f.tokens.push_back(q.token_seqs[v][i]);
      f.scale_ids.push_back(static_cast<int>(v));
      f.positions.push_back(static_cast<int>(i));
    }
  }
  return f;
}

FlatTokenSequence FlatTokenSequence::layout(const vq::ScaleSchedule& schedule, int fill) {
  FlatTokenSequence f;
  for (int v = 0; v < schedule.layers(); ++v) {
    for (int i = 0; i < schedule.lengths[v]; ++i) {
      f.tokens.push_back(fill);
      f.scale_ids.push_back(v);
      f.positions.push_back(i);
    }
  }
  return f;
}

vq::QuantizedMotion FlatTokenSequence::to_quantized(const vq::ScaleSchedule& schedule) const {
  return vq::QuantizedMotion::unflatten(tokens, schedule);
}

Corruption corrupt_for_training(const FlatTokenSequence& seq, double tau, int codebook_size, Rng& rng) {
  const int n = seq.size();
  Corruption c;
  c.input = seq;
  c.targets.assign(static_cast<std::size_t>(n), -1);
  c.selected = masked_count(tau, n);
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  for (int i = 0; i < c.selected; ++i) {
    const int j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(n - i)));
    std::swap(order[i], order[j]);
    const int p = order[i];
    c.targets[p] = seq.tokens[p];
    const double u = rng.uniform();
    if (u < 0.8) c.input.tokens[p] = mask_token(codebook_size);
    else if (u < 0.9) c.input.tokens[p] = static_cast<int>(rng.below(static_cast<std::uint64_t>(codebook_size)));
  }
  return c;
}

Matrix cfg_logits(const Matrix& cond, const Matrix& uncond, double s) {
  require(cond.rows() == uncond.rows() && cond.cols() == uncond.cols(), "guidance logits differ in shape");
  if (s == 0.0) return cond;
  Matrix out(cond.rows(), cond.cols());
  for (Eigen::Index i = 0; i < cond.size(); ++i) {
    const double c = cond.data()[i], u = uncond.data()[i];
    // equal entries pass through untouched (this also keeps -0.0 and infinities)
    out.data()[i] = c == u ? c : c + s * (c - u);
  }
  return out;
}

}  // namespace msm::t2m

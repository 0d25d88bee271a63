#pragma once

#include <vector>

#include "msm/core/rng.hpp"
#include "msm/core/types.hpp"
#include "msm/vq/quantizer.hpp"

namespace msm::t2m {

/// Special ids appended after the K codebook entries.
inline int mask_token(int codebook_size) { return codebook_size; }
inline int pad_token(int codebook_size) { return codebook_size + 1; }

/// Fraction of tokens left masked at progress tau: cos(pi * tau / 2), with
/// the endpoints returned exactly.
double mask_schedule(double tau);

/// ceil(mask_schedule(tau) * n). Products within 1e-9 of an integer are
/// snapped first so that rounding in cos() cannot add a token.
int masked_count(double tau, int n);

/// All token sequences of a motion concatenated coarse to fine.
struct FlatTokenSequence {
  std::vector<int> tokens;
  std::vector<int> scale_ids;
  std::vector<int> positions;  // index within the scale

  int size() const { return static_cast<int>(tokens.size()); }
  static FlatTokenSequence from_quantized(const vq::QuantizedMotion& q);
  /// Layout (scale ids and positions) for a schedule with every token set to `fill`.
  static FlatTokenSequence layout(const vq::ScaleSchedule& schedule, int fill);
  vq::QuantizedMotion to_quantized(const vq::ScaleSchedule& schedule) const;
};

struct Corruption {
  FlatTokenSequence input;
  std::vector<int> targets;  // original token at selected positions, -1 elsewhere
  int selected = 0;
};

/// Selects masked_count(tau, N) positions uniformly without replacement; a
/// selected token becomes MASK with probability 0.8, a uniform random code
/// with probability 0.1, and stays as is otherwise.
Corruption corrupt_for_training(const FlatTokenSequence& seq, double tau, int codebook_size, Rng& rng);

/// cond + s * (cond - uncond); equal to (1 + s) * cond - s * uncond and
/// exactly cond when s == 0 or cond == uncond.
Matrix cfg_logits(const Matrix& cond, const Matrix& uncond, double s);

}  // namespace msm::t2m

#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <json.hpp>

#include "msm/core/rng.hpp"
#include "msm/core/types.hpp"

namespace msm::vq {

/// Linear interpolation along time with aligned end points. Row i of the
/// result samples the source at i * (src - 1) / (dst - 1).
Matrix interpolation_matrix(int src_len, int dst_len);
Matrix interpolate(const Matrix& seq, int target_len);

/// Temporal lengths per quantization layer, coarse to fine; the last equals
/// the latent length n.
struct ScaleSchedule {
  std::vector<int> lengths;

  int layers() const { return static_cast<int>(lengths.size()); }
  int full_length() const { return lengths.back(); }
  int total_tokens() const;
  /// Throws unless lengths are >= 1, strictly increasing and end at n.
  void validate(int n) const;

  /// round(ratio * n) per layer; ratios must yield a strictly increasing
  /// list ending at n.
  static ScaleSchedule from_ratios(int n, const std::vector<double>& ratios);
  /// [n / 2^V, ..., n / 2, n] with rounding (V extra layers).
  static ScaleSchedule halving(int n, int extra_layers);
  /// V + 1 layers all at full length (classic residual VQ).
  static ScaleSchedule full_scale(int n, int extra_layers);
};

class Codebook {
 public:
  Codebook() = default;
  Codebook(int size, int dim, double decay = 0.99);

  int size() const { return static_cast<int>(codes_.rows()); }
  int dim() const { return static_cast<int>(codes_.cols()); }
  const Matrix& codes() const { return codes_; }
  const Vector& ema_counts() const { return ema_counts_; }
  const Matrix& ema_sums() const { return ema_sums_; }
  const std::vector<std::int64_t>& usage() const { return usage_; }
  double decay() const { return decay_; }
  bool initialized() const { return initialized_; }

  /// Sets codes directly and restarts the EMA state from them.
  void set_codes(const Matrix& codes);
  /// Restores a saved state.
  void set_state(const Matrix& codes, const Vector& counts, const Matrix& sums);
  /// Seeds codes from randomly chosen rows of `vectors` (with replacement
  /// when there are fewer rows than codes).
  void initialize_from(const Matrix& vectors, Rng& rng);

  /// Index of the code with minimal squared distance; ties pick the lowest
  /// index.
  int nearest(const Eigen::Ref<const RowVector>& x) const;
  std::vector<int> nearest_rows(const Matrix& x) const;
  Matrix lookup(const std::vector<int>& indices) const;

  /// counts <- decay * counts + (1 - decay) * n_k,
  /// sums <- decay * sums + (1 - decay) * sum of assigned vectors, and
  /// assigned codes <- sums / (counts + eps). Unassigned codes keep their
  /// values.
  void ema_update(const std::vector<int>& indices, const Matrix& vectors);
  /// Re-seeds codes unused since the last reset from random rows of
  /// `pool`, then clears the usage counters. Returns how many were reset.
  int reset_dead_codes(const Matrix& pool, Rng& rng);
  /// exp(entropy) of the usage histogram.
  double perplexity() const;
  void clear_usage();

  static constexpr double kEps = 1e-5;

 private:
  Matrix codes_;
  Vector ema_counts_;
  Matrix ema_sums_;
  std::vector<std::int64_t> usage_;
  double decay_ = 0.99;
  bool initialized_ = false;
};

/// Token sequences per layer plus the schedule that produced them.
struct QuantizedMotion {
  std::vector<std::vector<int>> token_seqs;
  ScaleSchedule schedule;

  int total_tokens() const;
  /// All tokens concatenated coarse to fine.
  std::vector<int> flatten() const;
  static QuantizedMotion unflatten(const std::vector<int>& flat, const ScaleSchedule& schedule);

  nlohmann::json to_json() const;
  static QuantizedMotion from_json(const nlohmann::json& j);
};

using CodebookFor = std::function<const Codebook&(int layer)>;

struct QuantizeResult {
  QuantizedMotion tokens;
  Matrix reconstruction;                // sum of upsampled codes (n x d)
  Matrix final_residual;                // f - reconstruction
  std::vector<Matrix> layer_inputs;     // residual resampled to h^v, per layer
  std::vector<Matrix> layer_codes;      // looked-up codes at h^v, per layer
};

/// Residual quantization over a schedule. Layer v quantizes the residual
/// resampled to length h^v and subtracts the codes resampled back to n.
QuantizeResult quantize(const Matrix& f, const ScaleSchedule& schedule, const CodebookFor& codebook);
QuantizeResult quantize(const Matrix& f, const ScaleSchedule& schedule, const Codebook& shared);

/// Sum of upsampled codes over layers [0, upto] (all layers by default).
Matrix dequantize(const QuantizedMotion& q, const CodebookFor& codebook, int upto = -1);
Matrix dequantize(const QuantizedMotion& q, const Codebook& shared, int upto = -1);

}  // namespace msm::vq

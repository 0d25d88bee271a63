#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "msm/core/rng.hpp"
#include "msm/core/types.hpp"
#include "msm/motion/pose.hpp"

namespace msm::eval {

inline constexpr double kFidEpsilon = 1e-6;
inline constexpr int kMetricRepeats = 20;

/// Frechet distance between Gaussian fits of two sample sets (rows are
/// samples). Covariances use the unbiased estimator plus eps * I.
double fid(const Matrix& real, const Matrix& gen, double eps = kFidEpsilon);

/// Symmetric positive semi-definite square root; negative eigenvalues from
/// round-off are clamped to zero.
Matrix sqrtm_psd(const Matrix& m);

/// Top-1..top-k retrieval rates for one draw of distractor pools: motion i
/// is ranked against its own text and pool_size - 1 other texts by Euclidean
/// distance. Ties rank in favor of the true text.
std::vector<double> r_precision_once(const Matrix& motion, const Matrix& text, int pool_size, int top_k, Rng& rng);

struct MetricValue {
  std::string metric;
  double value = 0;
  double ci95 = 0;
  std::uint64_t seed = 0;
  int n_repeats = 1;
  nlohmann::json to_json() const;
};

/// Mean and 95% confidence half-width (1.96 * sample std / sqrt(n)).
std::pair<double, double> mean_ci95(const std::vector<double>& xs);

/// R-precision averaged over `repeats` distractor draws; one entry per k.
std::vector<MetricValue> r_precision(const Matrix& motion, const Matrix& text, int pool_size, int top_k,
                                     std::uint64_t seed, int repeats = kMetricRepeats);

double mm_dist(const Matrix& motion, const Matrix& text);
double clip_score(const Matrix& motion, const Matrix& text);

/// Per caption, embeddings of repeated generations (rows). Each set is split
/// into `pairs` disjoint random pairs; the mean pair distance is averaged
/// over captions.
double mmodality(const std::vector<Matrix>& per_caption, int pairs, Rng& rng);

/// Mean distance between `pairs` random pairs of distinct rows.
double diversity(const Matrix& emb, int pairs, Rng& rng);

/// Mean per-joint, per-frame distance between two position sequences.
double joint_position_error(const std::vector<std::vector<motion::Vec3>>& gt,
                            const std::vector<std::vector<motion::Vec3>>& rec);

/// Same after moving each sequence so its root starts at the XZ origin facing
/// the same way (heading taken from the root orientation at frame 0).
double joint_position_error(const motion::PoseSequence& gt, const motion::PoseSequence& rec,
                            const motion::SkeletonSpec& skel);

/// Validates a metrics report: {metrics: [{metric, value, ci95, seed, n_repeats}]}.
void validate_report(const nlohmann::json& report);

}  // namespace msm::eval

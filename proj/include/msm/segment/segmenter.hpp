#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "msm/motion/pose.hpp"

namespace msm::segment {

struct SegmentationParams {
  double sigma = 9.0;  // Gaussian smoothing std, frames
  double accept_scale = 0.5;
  double min_len_s = 4.0;
  double max_len_s = 12.0;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

struct TroughProfile {
  std::vector<int> trough_frames;  // strictly increasing
  std::vector<double> rho;         // in [0, 1], stiller troughs score higher
  std::vector<double> smoothed_speed;
};

struct Segment {
  int start = 0;
  int end = 0;  // exclusive
  bool flagged = false;  // remainder shorter than the minimum duration

  int length() const { return end - start; }
  bool operator==(const Segment&) const = default;
};

/// Mean positional speed (m/frame) over the hip and end effectors. Frame t
/// uses the forward difference t -> t+1; the last frame repeats its
/// predecessor so the result has one entry per frame.
std::vector<double> tracked_speed(const motion::PoseSequence& pose, const motion::SkeletonSpec& skel);

/// Gaussian filter with radius ceil(3 sigma) and mirrored boundaries.
std::vector<double> gaussian_smooth(const std::vector<double>& x, double sigma);

/// Interior strict local minima, plus the midpoint of any flat run bounded
/// on both sides by larger values. Differences at round-off level (relative
/// 1e-12) are treated as ties.
std::vector<int> find_troughs(const std::vector<double>& x);

TroughProfile troughs_from_speed(const std::vector<double>& speed, double sigma);
TroughProfile compute_troughs(const motion::PoseSequence& pose, const motion::SkeletonSpec& skel,
                              const SegmentationParams& params);

/// Cuts [0, frames) using a precomputed profile.
std::vector<Segment> segment_profile(int frames, double fps, const TroughProfile& profile,
                                     const SegmentationParams& params);
std::vector<Segment> segment(const motion::PoseSequence& pose, const motion::SkeletonSpec& skel,
                             const SegmentationParams& params);

nlohmann::json to_json(const SegmentationParams& p);
SegmentationParams params_from_json(const nlohmann::json& j);

}  // namespace msm::segment

#include "msm/segment/segmenter.hpp"

#include <algorithm>
#include <cmath>

#include "msm/core/error.hpp"
#include "msm/core/rng.hpp"

namespace msm::segment {

namespace {

constexpr double kRhoEps = 1e-9;

int reflect(int i, int n) {
  // Mirror about the edges without repeating the edge sample twice: -1 -> 0.
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - i - 1;
  }
  return i;
}

}  // namespace

void SegmentationParams::validate() const {
  require(sigma > 0, "segmenter.sigma must be positive", ErrorKind::config);
  require(accept_scale >= 0 && accept_scale <= 1, "segmenter.accept_scale must lie in [0, 1]", ErrorKind::config);
  require(min_len_s > 0 && min_len_s < max_len_s, "segmenter durations need 0 < min_len_s < max_len_s",
          ErrorKind::config);
}

std::vector<double> tracked_speed(const motion::PoseSequence& pose, const motion::SkeletonSpec& skel) {
  require(pose.frames() >= 2, "sequence too short");
  std::vector<int> tracked{skel.hip_index};
  tracked.insert(tracked.end(), skel.end_effectors.begin(), skel.end_effectors.end());
  const auto world = motion::forward_kinematics(pose, skel);
  const int N = pose.frames();
  std::vector<double> speed(static_cast<std::size_t>(N));
  for (int t = 0; t + 1 < N; ++t) {
    double s = 0;
    for (int j : tracked) s += (world[t + 1][j] - world[t][j]).norm();
    speed[t] = s / static_cast<double>(tracked.size());
  }
  speed[N - 1] = speed[N - 2];
  return speed;
}

std::vector<double> gaussian_smooth(const std::vector<double>& x, double sigma) {
  require(sigma > 0, "sigma must be positive");
  const int n = static_cast<int>(x.size());
  const int radius = static_cast<int>(std::ceil(3 * sigma));
  std::vector<double> w(static_cast<std::size_t>(2 * radius + 1));
  double total = 0;
  for (int k = -radius; k <= radius; ++k) {
    w[k + radius] = std::exp(-0.5 * k * k / (sigma * sigma));
    total += w[k + radius];
  }
  for (double& v : w) v /= total;
  std::vector<double> out(x.size(), 0.0);
  for (int i = 0; i < n; ++i) {
    double acc = 0;
    for (int k = -radius; k <= radius; ++k) acc += w[k + radius] * x[reflect(i + k, n)];
    out[i] = acc;
  }
  return out;
}

std::vector<int> find_troughs(const std::vector<double>& x) {
  std::vector<int> out;
  const int n = static_cast<int>(x.size());
  // Differences below round-off of the signal scale count as ties.
  double scale = 0;
  for (double v : x) scale = std::max(scale, std::abs(v));
  const double tol = 1e-12 * std::max(scale, 1e-300);
  int i = 1;
  while (i + 1 < n) {
    if (!(x[i] < x[i - 1] - tol)) {
      ++i;
      continue;
    }
    int j = i;
    while (j + 1 < n && std::abs(x[j + 1] - x[i]) <= tol) ++j;
    if (j + 1 < n && x[j + 1] > x[i] + tol) out.push_back((i + j) / 2);
    i = j + 1;
  }
  return out;
}

TroughProfile troughs_from_speed(const std::vector<double>& speed, double sigma) {
  TroughProfile p;
  p.smoothed_speed = gaussian_smooth(speed, sigma);
  p.trough_frames = find_troughs(p.smoothed_speed);
  if (p.trough_frames.empty()) return p;
  double lo = p.smoothed_speed[p.trough_frames[0]], hi = lo;
  for (int t : p.trough_frames) {
    lo = std::min(lo, p.smoothed_speed[t]);
    hi = std::max(hi, p.smoothed_speed[t]);
  }
  for (int t : p.trough_frames) p.rho.push_back(1.0 - (p.smoothed_speed[t] - lo) / (hi - lo + kRhoEps));
  return p;
}

TroughProfile compute_troughs(const motion::PoseSequence& pose, const motion::SkeletonSpec& skel,
                              const SegmentationParams& params) {
  params.validate();
  return troughs_from_speed(tracked_speed(pose, skel), params.sigma);
}

std::vector<Segment> segment_profile(int frames, double fps, const TroughProfile& profile,
                                     const SegmentationParams& params) {
  params.validate();
  require(fps > 0, "fps must be positive");
  const int max_f = static_cast<int>(std::lround(params.max_len_s * fps));
  const int min_f = std::max(1, static_cast<int>(std::lround(params.min_len_s * fps)));
  if (max_f < 2) fail(ErrorKind::config, "max_len_s * fps must cover at least 2 frames");
  const int N = frames;
  if (N < min_f) return {{0, N, true}};

  Rng rng(params.rng_seed);
  std::vector<Segment> out;
  int start = 0;
  const auto& tf = profile.trough_frames;

  // Latest trough usable as a forced cut from `start`, else the hard limit.
  auto forced_cut = [&]() {
    int best = -1;
    for (int t : tf) {
      if (t <= start) continue;
      if (t - start > max_f) break;
      if (t - start >= min_f && N - t >= min_f) best = t;
    }
    return best >= 0 ? best : start + max_f;
  };

  for (std::size_t k = 0; k < tf.size(); ++k) {
    const int t = tf[k];
    if (t <= start) continue;
    while (t - start > max_f) {
      const int cut = forced_cut();
      out.push_back({start, cut, false});
      start = cut;
    }
    if (t <= start) continue;
    const int left = t - start;
    if (left < min_f || N - t < min_f) continue;
    if (rng.uniform() < params.accept_scale * profile.rho[k]) {
      out.push_back({start, t, false});
      start = t;
    }
  }
  while (N - start > max_f) {
    const int cut = forced_cut();
    out.push_back({start, cut, false});
    start = cut;
  }
  out.push_back({start, N, N - start < min_f});
  return out;
}

std::vector<Segment> segment(const motion::PoseSequence& pose, const motion::SkeletonSpec& skel,
                             const SegmentationParams& params) {
  params.validate();
  if (pose.frames() < 2) return {{0, pose.frames(), true}};
  return segment_profile(pose.frames(), pose.fps(), compute_troughs(pose, skel, params), params);
}

nlohmann::json to_json(const SegmentationParams& p) {
  return {{"sigma", p.sigma},
          {"accept_scale", p.accept_scale},
          {"min_len_s", p.min_len_s},
          {"max_len_s", p.max_len_s},
          {"rng_seed", p.rng_seed}};
}

SegmentationParams params_from_json(const nlohmann::json& j) {
  SegmentationParams p;
  p.sigma = j.value("sigma", p.sigma);
  p.accept_scale = j.value("accept_scale", p.accept_scale);
  p.min_len_s = j.value("min_len_s", p.min_len_s);
  p.max_len_s = j.value("max_len_s", p.max_len_s);
  p.rng_seed = j.value("rng_seed", p.rng_seed);
  p.validate();
  return p;
}

}  // namespace msm::segment

#pragma once

#include <string>
#include <vector>

#include "msm/core/types.hpp"
#include "msm/motion/pose.hpp"

namespace msm::motion {

/// Column layout of per-frame pose features:
///   [root angular velocity about Y (1), root XZ velocity in the heading
///   frame (2), root height (1), local 6D rotations (6j), heading-local joint
///   positions (3j), heading-local joint velocities (3j), foot contacts (4)].
/// The essential layout keeps only the first 4 + 6j columns.
struct FeatureLayout {
  int joints = kDefaultJointCount;
  bool essential = false;

  static constexpr int kRootColumns = 4;
  static constexpr int kContactColumns = 4;

  static constexpr int full_width(int j) { return kRootColumns + 6 * j + 3 * j + 3 * j + kContactColumns; }
  static constexpr int essential_width(int j) { return kRootColumns + 6 * j; }

  int width() const { return essential ? essential_width(joints) : full_width(joints); }
  int root_angular_velocity() const { return 0; }
  int root_linear_velocity() const { return 1; }
  int root_height() const { return 3; }
  int rotation(int j) const { return kRootColumns + 6 * j; }
  int local_position(int j) const { return kRootColumns + 6 * joints + 3 * j; }
  int local_velocity(int j) const { return kRootColumns + 9 * joints + 3 * j; }
  int contacts() const { return kRootColumns + 12 * joints; }

  /// "full296", "essential148", ...
  std::string tag() const;
  /// Parses a tag produced by tag().
  static FeatureLayout from_tag(const std::string& tag);
  /// Picks the layout whose width equals `width` for `joints` joints.
  static FeatureLayout for_width(int width, int joints = kDefaultJointCount);
};

static_assert(FeatureLayout::full_width(24) == 296);
static_assert(FeatureLayout::essential_width(24) == 148);

struct FeatureSequence {
  Matrix data;  // frames x width
  FeatureLayout layout;
  bool normalized = false;
  double fps = 30.0;

  int frames() const { return static_cast<int>(data.rows()); }
  /// Essential sub-layout view (first 4 + 6j columns).
  FeatureSequence essential() const;
};

inline constexpr double kFootContactSpeed = 0.02;  // m/frame

/// N poses -> N-1 feature rows (forward differences, last frame dropped).
FeatureSequence extract_features(const PoseSequence& pose, const SkeletonSpec& skel);

/// Root state before each feature row plus the state after the last one
/// (frames + 1 entries).
struct RootTrajectory {
  std::vector<double> heading;
  std::vector<Eigen::Vector2d> xz;
};
RootTrajectory integrate_root(const FeatureSequence& feat, double initial_heading = 0.0,
                              const Eigen::Vector2d& initial_xz = Eigen::Vector2d::Zero());

/// Integrates root velocities from the given initial heading and XZ position
/// and rebuilds local rotations from the 6D columns. Accepts the full or the
/// essential layout; row t of the features yields pose frame t.
PoseSequence recover_pose(const FeatureSequence& feat, const SkeletonSpec& skel, double initial_heading = 0.0,
                          const Eigen::Vector2d& initial_xz = Eigen::Vector2d::Zero());

}  // namespace msm::motion

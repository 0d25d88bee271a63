#pragma once

#include <vector>

#include "msm/motion/skeleton.hpp"

namespace msm::motion {

/// Root trajectory plus parent-relative joint rotations. The root joint's
/// rotation is its world orientation.
class PoseSequence {
 public:
  PoseSequence() = default;
  PoseSequence(int frames, int joints, double fps);

  int frames() const { return frames_; }
  int joints() const { return joints_; }
  double fps() const { return fps_; }
  void set_fps(double fps) { fps_ = fps; }

  Vec3& root(int t) { return root_[static_cast<std::size_t>(t)]; }
  const Vec3& root(int t) const { return root_[static_cast<std::size_t>(t)]; }
  Quat& rotation(int t, int j) { return rot_[static_cast<std::size_t>(t) * joints_ + j]; }
  const Quat& rotation(int t, int j) const { return rot_[static_cast<std::size_t>(t) * joints_ + j]; }

  /// Throws unless frames >= 1, fps > 0 and every quaternion is unit-norm.
  void validate() const;

  /// Frames [start, start + count).
  PoseSequence slice(int start, int count) const;

 private:
  int frames_ = 0;
  int joints_ = 0;
  double fps_ = 30.0;
  std::vector<Vec3> root_;
  std::vector<Quat> rot_;
};

/// World joint positions for one frame.
std::vector<Vec3> forward_kinematics(const PoseSequence& pose, int frame, const SkeletonSpec& skel);

/// World positions for every frame: result[t][j].
std::vector<std::vector<Vec3>> forward_kinematics(const PoseSequence& pose, const SkeletonSpec& skel);

/// All joints at identity rotation, root at (0, height, 0).
PoseSequence rest_pose(const SkeletonSpec& skel, int frames, double height, double fps = 30.0);

/// Applies a global yaw rotation (about +Y through the origin) and an XZ shift.
PoseSequence transform_globally(const PoseSequence& pose, double yaw, double dx, double dz);

}  // namespace msm::motion

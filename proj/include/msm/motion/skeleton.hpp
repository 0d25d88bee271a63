#pragma once

#include <string>
#include <utility>
#include <vector>

#include "msm/motion/rotation.hpp"

namespace msm::motion {

/// Joint hierarchy with rest offsets (meters, Y up, character facing +Z,
/// character's left on +X). Joints are stored parents-first.
struct SkeletonSpec {
  std::vector<std::string> joint_names;
  std::vector<int> parents;  // -1 for the root
  std::vector<Vec3> offsets;
  std::vector<std::pair<int, int>> left_right_pairs;
  std::vector<int> end_effectors;  // hands, feet, head
  std::vector<int> contact_joints;  // heel/toe per foot, left first
  int hip_index = 0;

  int joint_count() const { return static_cast<int>(joint_names.size()); }
  int find(const std::string& name) const;  // -1 when absent

  /// Throws on a malformed hierarchy or inconsistent index lists.
  void validate() const;

  /// Joint index -> mirrored partner (itself for midline joints). Throws
  /// "missing pair entry" when a lateral joint has no partner.
  std::vector<int> mirror_map() const;

  /// World rest positions with the root at the origin.
  std::vector<Vec3> rest_positions() const;
};

inline constexpr int kDefaultJointCount = 24;

/// 24-joint humanoid used throughout the toolkit.
const SkeletonSpec& default_skeleton();

}  // namespace msm::motion

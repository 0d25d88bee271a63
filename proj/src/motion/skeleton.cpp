#include "msm/motion/skeleton.hpp"

#include <algorithm>
#include <set>

#include "msm/core/error.hpp"

namespace msm::motion {

int SkeletonSpec::find(const std::string& name) const {
  auto it = std::find(joint_names.begin(), joint_names.end(), name);
  return it == joint_names.end() ? -1 : static_cast<int>(it - joint_names.begin());
}

void SkeletonSpec::validate() const {
  const int j = joint_count();
  require(j >= 1, "skeleton has no joints");
  require(static_cast<int>(parents.size()) == j && static_cast<int>(offsets.size()) == j,
          "skeleton field lengths differ");
  require(hip_index == 0 && parents[0] == -1, "skeleton root must be joint 0 with parent -1");
  std::set<std::string> names;
  for (int i = 0; i < j; ++i) {
    require(names.insert(joint_names[i]).second, "duplicate joint name '" + joint_names[i] + "'");
    if (i > 0) require(parents[i] >= 0 && parents[i] < i, "joint '" + joint_names[i] + "' precedes its parent");
  }
  std::set<int> paired;
  for (auto [a, b] : left_right_pairs) {
    require(a >= 0 && a < j && b >= 0 && b < j && a != b, "invalid left/right pair");
    require(paired.insert(a).second && paired.insert(b).second, "left/right pairs overlap");
  }
  for (int e : end_effectors) require(e >= 0 && e < j, "end effector index out of range");
  for (int c : contact_joints) require(c >= 0 && c < j, "contact joint index out of range");
}

std::vector<int> SkeletonSpec::mirror_map() const {
  std::vector<int> map(static_cast<std::size_t>(joint_count()));
  for (int i = 0; i < joint_count(); ++i) map[i] = i;
  for (auto [a, b] : left_right_pairs) {
    map[a] = b;
    map[b] = a;
  }
  const auto rest = rest_positions();
  for (int i = 0; i < joint_count(); ++i) {
    if (map[i] == i && std::abs(rest[i].x()) > 1e-9) {
      fail(ErrorKind::invalid_argument, "missing pair entry for lateral joint '" + joint_names[i] + "'");
    }
  }
  return map;
}

std::vector<Vec3> SkeletonSpec::rest_positions() const {
  std::vector<Vec3> pos(offsets.size(), Vec3::Zero());
  for (std::size_t i = 1; i < offsets.size(); ++i) pos[i] = pos[parents[i]] + offsets[i];
  return pos;
}

namespace {

SkeletonSpec build_default() {
  SkeletonSpec s;
  auto add = [&](const std::string& name, const std::string& parent, Vec3 off) {
    s.joint_names.push_back(name);
    s.parents.push_back(parent.empty() ? -1 : s.find(parent));
    s.offsets.push_back(off);
  };
  add("Hips", "", {0, 0, 0});
  add("Spine", "Hips", {0, 0.10, 0});
  add("Spine1", "Spine", {0, 0.12, 0});
  add("Spine2", "Spine1", {0, 0.12, 0});
  add("Neck", "Spine2", {0, 0.15, 0});
  add("Head", "Neck", {0, 0.10, 0.02});
  for (const char* side : {"Left", "Right"}) {
    const double sx = std::string(side) == "Left" ? 1.0 : -1.0;
    const std::string p = side;
    add(p + "Shoulder", "Spine2", {sx * 0.05, 0.12, 0});
    add(p + "Arm", p + "Shoulder", {sx * 0.12, 0, 0});
    add(p + "ForeArm", p + "Arm", {sx * 0.28, 0, 0});
    add(p + "Hand", p + "ForeArm", {sx * 0.25, 0, 0});
  }
  for (const char* side : {"Left", "Right"}) {
    const double sx = std::string(side) == "Left" ? 1.0 : -1.0;
    const std::string p = side;
    add(p + "UpLeg", "Hips", {sx * 0.09, -0.05, 0});
    add(p + "Leg", p + "UpLeg", {0, -0.42, 0});
    add(p + "Foot", p + "Leg", {0, -0.41, 0});
    add(p + "ToeBase", p + "Foot", {0, -0.06, 0.12});
    add(p + "ToeEnd", p + "ToeBase", {0, 0, 0.06});
  }
  for (const char* part : {"Shoulder", "Arm", "ForeArm", "Hand", "UpLeg", "Leg", "Foot", "ToeBase", "ToeEnd"}) {
    s.left_right_pairs.emplace_back(s.find(std::string("Left") + part), s.find(std::string("Right") + part));
  }
  s.end_effectors = {s.find("LeftHand"), s.find("RightHand"), s.find("LeftFoot"), s.find("RightFoot"), s.find("Head")};
  s.contact_joints = {s.find("LeftFoot"), s.find("LeftToeBase"), s.find("RightFoot"), s.find("RightToeBase")};
  s.validate();
  return s;
}

}  // namespace

const SkeletonSpec& default_skeleton() {
  static const SkeletonSpec s = build_default();
  return s;
}

}  // namespace msm::motion

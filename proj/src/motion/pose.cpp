#include "msm/motion/pose.hpp"

#include "msm/core/error.hpp"

namespace msm::motion {

PoseSequence::PoseSequence(int frames, int joints, double fps)
    : frames_(frames),
      joints_(joints),
      fps_(fps),
      root_(static_cast<std::size_t>(frames), Vec3::Zero()),
      rot_(static_cast<std::size_t>(frames) * joints, Quat::Identity()) {}

void PoseSequence::validate() const {
  require(frames_ >= 1, "pose sequence has no frames");
  require(fps_ > 0.0, "pose sequence fps must be positive");
  for (std::size_t i = 0; i < rot_.size(); ++i) {
    if (!is_unit(rot_[i])) {
      fail(ErrorKind::invalid_argument, "non-unit quaternion at frame " + std::to_string(i / joints_) + ", joint " +
                                            std::to_string(i % joints_));
    }
  }
}

PoseSequence PoseSequence::slice(int start, int count) const {
  require(start >= 0 && count >= 1 && start + count <= frames_, "pose slice out of range");
  PoseSequence out(count, joints_, fps_);
  for (int t = 0; t < count; ++t) {
    out.root(t) = root(start + t);
    for (int j = 0; j < joints_; ++j) out.rotation(t, j) = rotation(start + t, j);
  }
  return out;
}

std::vector<Vec3> forward_kinematics(const PoseSequence& pose, int frame, const SkeletonSpec& skel) {
  const int J = skel.joint_count();
  require(pose.joints() == J, "pose joint count does not match skeleton");
  std::vector<Vec3> pos(static_cast<std::size_t>(J));
  std::vector<Quat> world(static_cast<std::size_t>(J));
  world[0] = pose.rotation(frame, 0);
  pos[0] = pose.root(frame);
  for (int j = 1; j < J; ++j) {
    const int p = skel.parents[j];
    world[j] = world[p] * pose.rotation(frame, j);
    pos[j] = pos[p] + world[p] * skel.offsets[j];
  }
  return pos;
}

std::vector<std::vector<Vec3>> forward_kinematics(const PoseSequence& pose, const SkeletonSpec& skel) {
  std::vector<std::vector<Vec3>> out;
  out.reserve(static_cast<std::size_t>(pose.frames()));
  for (int t = 0; t < pose.frames(); ++t) out.push_back(forward_kinematics(pose, t, skel));
  return out;
}

PoseSequence rest_pose(const SkeletonSpec& skel, int frames, double height, double fps) {
  PoseSequence p(frames, skel.joint_count(), fps);
  for (int t = 0; t < frames; ++t) p.root(t) = Vec3(0, height, 0);
  return p;
}

PoseSequence transform_globally(const PoseSequence& pose, double yaw, double dx, double dz) {
  PoseSequence out = pose;
  const Quat q = yaw_quat(yaw);
  for (int t = 0; t < pose.frames(); ++t) {
    out.root(t) = q * pose.root(t) + Vec3(dx, 0, dz);
    out.rotation(t, 0) = (q * pose.rotation(t, 0)).normalized();
  }
  return out;
}

}  // namespace msm::motion

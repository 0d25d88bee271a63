#include "msm/motion/mirror.hpp"

#include <algorithm>

#include "msm/core/error.hpp"

namespace msm::motion {

PoseSequence mirror(const PoseSequence& pose, const SkeletonSpec& skel) {
  require(pose.joints() == skel.joint_count(), "pose joint count does not match skeleton");
  const auto map = skel.mirror_map();
  PoseSequence out(pose.frames(), pose.joints(), pose.fps());
  for (int t = 0; t < pose.frames(); ++t) {
    const Vec3& r = pose.root(t);
    out.root(t) = Vec3(-r.x(), r.y(), r.z());
    for (int j = 0; j < pose.joints(); ++j) {
      const Quat& q = pose.rotation(t, map[j]);
      // diag(-1,1,1) R diag(-1,1,1) flips the y and z axis components.
      out.rotation(t, j) = Quat(q.w(), q.x(), -q.y(), -q.z());
    }
  }
  return out;
}

FeatureSequence mirror_features(const FeatureSequence& feat, const SkeletonSpec& skel) {
  require(!feat.normalized, "feature mirroring expects unnormalized features");
  const FeatureLayout& L = feat.layout;
  require(L.joints == skel.joint_count(), "feature joint count does not match skeleton");
  require(feat.data.cols() == L.width(), "feature width does not match its layout");
  const auto map = skel.mirror_map();
  FeatureSequence out = feat;
  for (Eigen::Index t = 0; t < feat.data.rows(); ++t) {
    auto src = feat.data.row(t);
    auto dst = out.data.row(t);
    dst(L.root_angular_velocity()) = -src(L.root_angular_velocity());
    dst(L.root_linear_velocity()) = -src(L.root_linear_velocity());
    for (int j = 0; j < L.joints; ++j) {
      const int s = L.rotation(map[j]), d = L.rotation(j);
      // First column picks up -S, second column S.
      dst(d + 0) = src(s + 0);
      dst(d + 1) = -src(s + 1);
      dst(d + 2) = -src(s + 2);
      dst(d + 3) = -src(s + 3);
      dst(d + 4) = src(s + 4);
      dst(d + 5) = src(s + 5);
      if (L.essential) continue;
      for (int c : {L.local_position(0), L.local_velocity(0)}) {
        const int sj = c + 3 * map[j], dj = c + 3 * j;
        dst(dj) = -src(sj);
        dst(dj + 1) = src(sj + 1);
        dst(dj + 2) = src(sj + 2);
      }
    }
    if (L.essential) continue;
    const int contacts = std::min<int>(FeatureLayout::kContactColumns, static_cast<int>(skel.contact_joints.size()));
    for (int c = 0; c < contacts; ++c) {
      const int partner = map[skel.contact_joints[c]];
      const auto it = std::find(skel.contact_joints.begin(), skel.contact_joints.begin() + contacts, partner);
      require(it != skel.contact_joints.begin() + contacts, "contact joints are not closed under mirroring");
      dst(L.contacts() + c) = src(L.contacts() + static_cast<int>(it - skel.contact_joints.begin()));
    }
  }
  return out;
}

}  // namespace msm::motion

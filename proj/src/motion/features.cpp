#include "msm/motion/features.hpp"

#include <span>

#include "msm/core/error.hpp"

namespace msm::motion {

std::string FeatureLayout::tag() const {
  return (essential ? "essential" : "full") + std::to_string(width());
}

FeatureLayout FeatureLayout::from_tag(const std::string& tag) {
  FeatureLayout l;
  int width = 0;
  if (tag.rfind("essential", 0) == 0) {
    l.essential = true;
    width = std::stoi(tag.substr(9));
    l.joints = (width - kRootColumns) / 6;
  } else if (tag.rfind("full", 0) == 0) {
    width = std::stoi(tag.substr(4));
    l.joints = (width - kRootColumns - kContactColumns) / 12;
  } else {
    fail(ErrorKind::parse, "unknown feature layout tag '" + tag + "'");
  }
  if (l.width() != width) fail(ErrorKind::parse, "inconsistent feature layout tag '" + tag + "'");
  return l;
}

FeatureLayout FeatureLayout::for_width(int width, int joints) {
  if (width == full_width(joints)) return {joints, false};
  if (width == essential_width(joints)) return {joints, true};
  fail(ErrorKind::invalid_argument, "feature width " + std::to_string(width) + " matches no layout for " +
                                        std::to_string(joints) + " joints");
}

FeatureSequence FeatureSequence::essential() const {
  FeatureSequence out;
  out.layout = {layout.joints, true};
  out.data = data.leftCols(out.layout.width());
  out.normalized = normalized;
  out.fps = fps;
  return out;
}

FeatureSequence extract_features(const PoseSequence& pose, const SkeletonSpec& skel) {
  if (pose.frames() < 2) fail(ErrorKind::invalid_argument, "sequence too short");
  pose.validate();
  const int J = skel.joint_count();
  require(pose.joints() == J, "pose joint count does not match skeleton");

  FeatureSequence out;
  out.layout = {J, false};
  out.fps = pose.fps();
  const int N = pose.frames();
  out.data = Matrix::Zero(N - 1, out.layout.width());
  const FeatureLayout& L = out.layout;

  // FK with the root pinned to the vertical axis so that local positions do
  // not depend on the global XZ placement at all.
  PoseSequence centered = pose;
  for (int t = 0; t < N; ++t) centered.root(t).x() = centered.root(t).z() = 0.0;
  const auto frames = forward_kinematics(centered, skel);
  for (int t = 0; t + 1 < N; ++t) {
    const double heading = yaw_of(pose.rotation(t, 0));
    const double next_heading = yaw_of(pose.rotation(t + 1, 0));
    const Quat inv = yaw_quat(-heading);
    auto row = out.data.row(t);

    row(L.root_angular_velocity()) = wrap_angle(next_heading - heading);
    Vec3 droot = pose.root(t + 1) - pose.root(t);
    droot.y() = 0.0;
    const Vec3 dv = inv * droot;
    row(L.root_linear_velocity()) = dv.x();
    row(L.root_linear_velocity() + 1) = dv.z();
    row(L.root_height()) = pose.root(t).y();

    for (int j = 0; j < J; ++j) {
      const Quat local = j == 0 ? inv * pose.rotation(t, 0) : pose.rotation(t, j);
      const auto r6 = to_6d(local.toRotationMatrix());
      for (int k = 0; k < 6; ++k) row(L.rotation(j) + k) = r6[k];

      const Vec3 lp = inv * frames[t][j];
      const Vec3 lv = inv * (frames[t + 1][j] - frames[t][j] + droot);
      for (int k = 0; k < 3; ++k) {
        row(L.local_position(j) + k) = lp(k);
        row(L.local_velocity(j) + k) = lv(k);
      }
    }
    for (int c = 0; c < static_cast<int>(skel.contact_joints.size()) && c < FeatureLayout::kContactColumns; ++c) {
      const int j = skel.contact_joints[c];
      row(L.contacts() + c) = (frames[t + 1][j] - frames[t][j] + droot).norm() < kFootContactSpeed ? 1.0 : 0.0;
    }
  }
  return out;
}

RootTrajectory integrate_root(const FeatureSequence& feat, double initial_heading, const Eigen::Vector2d& initial_xz) {
  require(!feat.normalized, "root integration expects unnormalized features");
  const FeatureLayout& L = feat.layout;
  RootTrajectory out;
  out.heading.reserve(static_cast<std::size_t>(feat.frames()) + 1);
  out.xz.reserve(static_cast<std::size_t>(feat.frames()) + 1);
  double heading = initial_heading;
  Eigen::Vector2d xz = initial_xz;
  for (int t = 0; t < feat.frames(); ++t) {
    out.heading.push_back(heading);
    out.xz.push_back(xz);
    const Vec3 v(feat.data(t, L.root_linear_velocity()), 0.0, feat.data(t, L.root_linear_velocity() + 1));
    const Vec3 step = yaw_quat(heading) * v;
    xz += Eigen::Vector2d(step.x(), step.z());
    heading += feat.data(t, L.root_angular_velocity());
  }
  out.heading.push_back(heading);
  out.xz.push_back(xz);
  return out;
}

PoseSequence recover_pose(const FeatureSequence& feat, const SkeletonSpec& skel, double initial_heading,
                          const Eigen::Vector2d& initial_xz) {
  require(!feat.normalized, "recover_pose expects unnormalized features");
  const int J = skel.joint_count();
  require(feat.layout.joints == J, "feature layout joint count does not match skeleton");
  require(feat.data.cols() == feat.layout.width(), "feature width does not match its layout");
  require(feat.frames() >= 1, "no feature frames");
  const FeatureLayout& L = feat.layout;

  const RootTrajectory root = integrate_root(feat, initial_heading, initial_xz);
  PoseSequence pose(feat.frames(), J, feat.fps);
  for (int t = 0; t < feat.frames(); ++t) {
    const auto row = feat.data.row(t);
    const Quat yaw = yaw_quat(root.heading[t]);
    for (int j = 0; j < J; ++j) {
      double r6[6];
      for (int k = 0; k < 6; ++k) r6[k] = row(L.rotation(j) + k);
      Quat local(from_6d(std::span<const double, 6>(r6)));
      local.normalize();
      pose.rotation(t, j) = j == 0 ? (yaw * local).normalized() : local;
    }
    pose.root(t) = Vec3(root.xz[t].x(), row(L.root_height()), root.xz[t].y());
  }
  return pose;
}

}  // namespace msm::motion

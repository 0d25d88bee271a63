#pragma once

#include <filesystem>
#include <string>

#include "msm/motion/pose.hpp"

namespace msm::motion {

struct BvhData {
  PoseSequence pose;
  SkeletonSpec skeleton;
};

/// Root carries Xposition Yposition Zposition Zrotation Yrotation Xrotation,
/// every other joint Zrotation Yrotation Xrotation (degrees). Leaf joints get
/// a zero-length End Site.
std::string write_bvh(const PoseSequence& pose, const SkeletonSpec& skel);
void export_bvh(const PoseSequence& pose, const SkeletonSpec& skel, const std::filesystem::path& path);

/// Accepts any rotation channel order. Left/right pairs, end effectors and
/// contact joints are inferred from joint names when they follow the usual
/// Left*/Right* and *Hand/*Foot/*Toe/Head conventions.
BvhData parse_bvh(const std::string& text);
BvhData import_bvh(const std::filesystem::path& path);

}  // namespace msm::motion

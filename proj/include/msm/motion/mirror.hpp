#pragma once

#include "msm/motion/features.hpp"
#include "msm/motion/pose.hpp"

namespace msm::motion {

/// Reflects across the YZ plane: x -> -x for the root, paired joints swap
/// channels, and each rotation is conjugated by the reflection.
PoseSequence mirror(const PoseSequence& pose, const SkeletonSpec& skel);

/// The same reflection applied directly to unnormalized feature rows, so that
/// mirror_features(extract_features(p)) == extract_features(mirror(p)).
FeatureSequence mirror_features(const FeatureSequence& feat, const SkeletonSpec& skel);

}  // namespace msm::motion

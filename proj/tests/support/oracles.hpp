#pragma once

// Reference computations written independently of the library code paths,
// used as ground truth by the unit and acceptance tests.

#include <vector>

#include "msm/core/types.hpp"
#include "msm/motion/pose.hpp"

namespace msm::oracle {

/// Per-frame feature evaluation using rotation matrices throughout.
Matrix scripted_features(const motion::PoseSequence& pose, const motion::SkeletonSpec& skel);

/// Indices i with x[i-1] > x[i] < x[i+1] (strict, interior only).
std::vector<int> brute_force_minima(const std::vector<double>& x);

/// Two-pass column mean and population std.
void two_pass_stats(const std::vector<Matrix>& corpus, RowVector& mean, RowVector& stddev);

/// Exhaustive argmin of squared distance over codebook rows, first index on
/// ties, computed with long double accumulation.
int brute_force_nearest(const Matrix& codes, const RowVector& x);

/// Closed-form linear interpolation with aligned ends, one sample at a time.
Matrix hand_interpolate(const Matrix& src, int target_len);

/// Tokens still masked after step `l` of `L` for `n` tokens, from a long
/// double cosine; values within 1e-12 of an integer count as that integer.
int reference_masked_count(int l, int L, int n);

/// Frechet distance via separate eigendecompositions: sqrt(S1) first, then
/// the symmetric product sqrt(S1) S2 sqrt(S1).
double reference_fid(const Matrix& a, const Matrix& b, double eps = 1e-6);

/// Mean joint distance after moving each sequence's frame-0 root to the XZ
/// origin and its frame-0 facing (atan2 of the root's +Z image) to +Z.
double scripted_joint_error(const motion::PoseSequence& gt, const motion::PoseSequence& rec,
                            const motion::SkeletonSpec& skel);

}  // namespace msm::oracle

#pragma once

#include <array>
#include <span>

#include <Eigen/Geometry>

namespace msm::motion {

using Quat = Eigen::Quaterniond;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kUnitQuatTolerance = 1e-6;

bool is_unit(const Quat& q, double tol = kUnitQuatTolerance);

/// Wraps to (-pi, pi].
double wrap_angle(double a);

/// Heading of a rotation: angle about +Y of its rotated +Z axis.
double yaw_of(const Quat& q);
Quat yaw_quat(double yaw);

/// Continuous 6D representation: the first two columns of the rotation
/// matrix, column-major ([R00, R10, R20, R01, R11, R21]).
std::array<double, 6> to_6d(const Mat3& r);
/// Gram-Schmidt recovery; throws "invalid 6D rotation" when the two columns
/// are (near) parallel or vanishing.
Mat3 from_6d(std::span<const double, 6> v);

/// Angles in degrees such that R = Rz(z) * Ry(y) * Rx(x).
Vec3 to_euler_zyx_deg(const Mat3& r);
Mat3 from_euler_zyx_deg(const Vec3& zyx);

/// Elementary rotation about 'X', 'Y' or 'Z' by `deg` degrees.
Mat3 axis_rotation(char axis, double deg);

/// Geodesic angle between two rotations, radians.
double angle_between(const Quat& a, const Quat& b);

}  // namespace msm::motion

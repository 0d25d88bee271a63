#include "msm/motion/rotation.hpp"

#include <cmath>

#include "msm/core/error.hpp"

namespace msm::motion {

bool is_unit(const Quat& q, double tol) { return std::abs(q.norm() - 1.0) <= tol; }

double wrap_angle(double a) {
  a = std::fmod(a + M_PI, 2.0 * M_PI);
  if (a <= 0.0) a += 2.0 * M_PI;
  return a - M_PI;
}

double yaw_of(const Quat& q) {
  const Vec3 f = q * Vec3::UnitZ();
  return std::atan2(f.x(), f.z());
}

Quat yaw_quat(double yaw) { return Quat(Eigen::AngleAxisd(yaw, Vec3::UnitY())); }

std::array<double, 6> to_6d(const Mat3& r) {
  return {r(0, 0), r(1, 0), r(2, 0), r(0, 1), r(1, 1), r(2, 1)};
}

Mat3 from_6d(std::span<const double, 6> v) {
  const Vec3 a1(v[0], v[1], v[2]);
  const Vec3 a2(v[3], v[4], v[5]);
  const double n1 = a1.norm();
  if (n1 < 1e-8 || a1.cross(a2).norm() < 1e-8 * std::max(1.0, n1 * a2.norm())) {
    fail(ErrorKind::invalid_argument, "invalid 6D rotation");
  }
  const Vec3 b1 = a1 / n1;
  const Vec3 b2 = (a2 - b1.dot(a2) * b1).normalized();
  Mat3 r;
  r.col(0) = b1;
  r.col(1) = b2;
  r.col(2) = b1.cross(b2);
  return r;
}

Vec3 to_euler_zyx_deg(const Mat3& r) {
  constexpr double deg = 180.0 / M_PI;
  const double sy = std::clamp(-r(2, 0), -1.0, 1.0);
  const double y = std::asin(sy);
  double z, x;
  if (std::abs(sy) < 1.0 - 1e-12) {
    z = std::atan2(r(1, 0), r(0, 0));
    x = std::atan2(r(2, 1), r(2, 2));
  } else {
    // Gimbal lock: only z - x (or z + x) is observable; fold it into z.
    x = 0.0;
    z = std::atan2(-r(0, 1), r(1, 1));
  }
  return {z * deg, y * deg, x * deg};
}

Mat3 axis_rotation(char axis, double deg) {
  const double a = deg * M_PI / 180.0;
  switch (axis) {
    case 'X': return Eigen::AngleAxisd(a, Vec3::UnitX()).toRotationMatrix();
    case 'Y': return Eigen::AngleAxisd(a, Vec3::UnitY()).toRotationMatrix();
    case 'Z': return Eigen::AngleAxisd(a, Vec3::UnitZ()).toRotationMatrix();
    default: fail(ErrorKind::invalid_argument, std::string("unknown rotation axis '") + axis + "'");
  }
}

Mat3 from_euler_zyx_deg(const Vec3& zyx) {
  return axis_rotation('Z', zyx.x()) * axis_rotation('Y', zyx.y()) * axis_rotation('X', zyx.z());
}

double angle_between(const Quat& a, const Quat& b) {
  const Quat d = a.normalized().conjugate() * b.normalized();
  return 2.0 * std::atan2(d.vec().norm(), std::abs(d.w()));
}

}  // namespace msm::motion

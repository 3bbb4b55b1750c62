#pragma once

#include <cmath>
#include <cstdint>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace retrip {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Origin of a keypoint cluster. The numeric values are the indicator used in
// descriptor labels: absolute reflectivity -> 1, relative reflectivity -> 0.
enum class Label : std::uint8_t { kRrp = 0, kArp = 1 };

inline int label_value(Label l) { return static_cast<int>(l); }

// Element of SE(3): p' = rotation * p + translation.
struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidTransform identity() { return {}; }

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  Vec3 rotate(const Vec3& v) const { return rotation * v; }

  RigidTransform inverse() const {
    RigidTransform inv;
    inv.rotation = rotation.transpose();
    inv.translation = -(inv.rotation * translation);
    return inv;
  }

  // (a * b).apply(p) == a.apply(b.apply(p))
  friend RigidTransform operator*(const RigidTransform& a, const RigidTransform& b) {
    RigidTransform c;
    c.rotation = a.rotation * b.rotation;
    c.translation = a.rotation * b.translation + a.translation;
    return c;
  }

  static RigidTransform from_yaw(double yaw, const Vec3& t) {
    RigidTransform out;
    out.rotation = Eigen::AngleAxisd(yaw, Vec3::UnitZ()).toRotationMatrix();
    out.translation = t;
    return out;
  }
};

// Angle of the relative rotation between two rotation matrices, in radians.
inline double rotation_angle_between(const Mat3& a, const Mat3& b) {
  const Mat3 rel = a.transpose() * b;
  double c = (rel.trace() - 1.0) * 0.5;
  if (c > 1.0) c = 1.0;
  if (c < -1.0) c = -1.0;
  return std::acos(c);
}

// Voxel-fitted planar patch used by loop verification.
struct Plane {
  Vec3 center = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();
  int layer = 0;          // reflectivity layer, 0..4
  std::uint32_t support = 0;
};

}  // namespace retrip

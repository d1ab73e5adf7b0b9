// Rigid-body primitives: poses, SE(3) transforms, quaternion helpers.
//
// Everything here is templated on the scalar type and built on Eigen dense
// types. Quaternions are stored canonically (w >= 0, ties broken on the
// first non-zero vector component) so that a rotation has exactly one
// representation on disk and in comparisons.
#pragma once

#include <algorithm>
#include <cmath>

#include <Eigen/Geometry>

namespace trajaug {

template <typename Scalar>
using Vec3 = Eigen::Matrix<Scalar, 3, 1>;

template <typename Scalar>
using Quat = Eigen::Quaternion<Scalar>;

/// Resolve the double cover: returns q or -q, whichever has w > 0.
/// When w == 0 the first non-zero of (x, y, z) decides.
template <typename Scalar>
Quat<Scalar> canonical(const Quat<Scalar>& q) {
  const Scalar c[4] = {q.w(), q.x(), q.y(), q.z()};
  for (Scalar v : c) {
    if (v > Scalar(0)) return q;
    if (v < Scalar(0)) return Quat<Scalar>(-q.w(), -q.x(), -q.y(), -q.z());
  }
  return q;
}

template <typename Scalar>
Quat<Scalar> unit_canonical(const Quat<Scalar>& q) {
  return canonical(q.normalized());
}

/// Rotation of `angle` radians about world +z.
template <typename Scalar>
Quat<Scalar> yaw_quat(Scalar angle) {
  return canonical(Quat<Scalar>(Eigen::AngleAxis<Scalar>(angle, Vec3<Scalar>::UnitZ())));
}

/// Yaw of a rotation (heading of the rotated x axis in the xy plane).
template <typename Scalar>
Scalar yaw_of(const Quat<Scalar>& q) {
  const Vec3<Scalar> x = q * Vec3<Scalar>::UnitX();
  return std::atan2(x.y(), x.x());
}

/// Geodesic angle in [0, pi] between two rotations.
template <typename Scalar>
Scalar geodesic_angle(const Quat<Scalar>& a, const Quat<Scalar>& b) {
  const Quat<Scalar> d = a.conjugate() * b;
  return Scalar(2) * std::atan2(d.vec().norm(), std::abs(d.w()));
}

/// Shortest-arc spherical interpolation.
template <typename Scalar>
Quat<Scalar> slerp(const Quat<Scalar>& a, const Quat<Scalar>& b, Scalar f) {
  return unit_canonical(a.slerp(f, b));
}

template <typename Scalar>
struct PoseT {
  Vec3<Scalar> position = Vec3<Scalar>::Zero();
  Quat<Scalar> orientation = Quat<Scalar>::Identity();

  PoseT() = default;
  PoseT(const Vec3<Scalar>& p, const Quat<Scalar>& q)
      : position(p), orientation(unit_canonical(q)) {}

  /// Takes `q` as already unit length and only fixes its sign. Used where
  /// bit-exact values must survive (deserialization).
  static PoseT exact(const Vec3<Scalar>& p, const Quat<Scalar>& q) {
    PoseT out;
    out.position = p;
    out.orientation = canonical(q);
    return out;
  }

  static PoseT planar(Scalar x, Scalar y, Scalar z, Scalar yaw) {
    return PoseT(Vec3<Scalar>(x, y, z), yaw_quat(yaw));
  }

  friend bool operator==(const PoseT& a, const PoseT& b) {
    return a.position == b.position && a.orientation.coeffs() == b.orientation.coeffs();
  }
};

/// Rigid transform x -> R x + t, rotation held as a unit quaternion.
template <typename Scalar>
struct SE3TransformT {
  Quat<Scalar> rotation = Quat<Scalar>::Identity();
  Vec3<Scalar> translation = Vec3<Scalar>::Zero();

  SE3TransformT() = default;
  SE3TransformT(const Quat<Scalar>& r, const Vec3<Scalar>& t)
      : rotation(unit_canonical(r)), translation(t) {}

  static SE3TransformT identity() { return {}; }

  /// Planar element of SE(3): yaw about world z followed by a translation.
  static SE3TransformT planar(Scalar yaw, const Vec3<Scalar>& t) { return {yaw_quat(yaw), t}; }

  /// The transform that maps the world frame onto `p`.
  static SE3TransformT from_pose(const PoseT<Scalar>& p) { return {p.orientation, p.position}; }

  PoseT<Scalar> as_pose() const { return PoseT<Scalar>(translation, rotation); }

  Eigen::Matrix<Scalar, 4, 4> matrix() const {
    Eigen::Matrix<Scalar, 4, 4> m = Eigen::Matrix<Scalar, 4, 4>::Identity();
    m.template topLeftCorner<3, 3>() = rotation.toRotationMatrix();
    m.template topRightCorner<3, 1>() = translation;
    return m;
  }

  friend bool operator==(const SE3TransformT& a, const SE3TransformT& b) {
    return a.translation == b.translation && a.rotation.coeffs() == b.rotation.coeffs();
  }
};

/// a ∘ b: apply b first, then a.
template <typename Scalar>
SE3TransformT<Scalar> compose(const SE3TransformT<Scalar>& a, const SE3TransformT<Scalar>& b) {
  return {a.rotation * b.rotation, a.rotation * b.translation + a.translation};
}

template <typename Scalar>
SE3TransformT<Scalar> inverse(const SE3TransformT<Scalar>& t) {
  const Quat<Scalar> r = t.rotation.conjugate();
  return {r, -(r * t.translation)};
}

template <typename Scalar>
Vec3<Scalar> apply(const SE3TransformT<Scalar>& t, const Vec3<Scalar>& p) {
  return t.rotation * p + t.translation;
}

template <typename Scalar>
PoseT<Scalar> apply(const SE3TransformT<Scalar>& t, const PoseT<Scalar>& p) {
  if (t == SE3TransformT<Scalar>::identity()) return p;  // skip renormalization
  return PoseT<Scalar>(t.rotation * p.position + t.translation, t.rotation * p.orientation);
}

/// World-frame T with apply(T, src) == dst, i.e. T = dst ∘ src⁻¹.
template <typename Scalar>
SE3TransformT<Scalar> relative_transform(const PoseT<Scalar>& src, const PoseT<Scalar>& dst) {
  if (src == dst) return SE3TransformT<Scalar>::identity();
  const Quat<Scalar> r = dst.orientation * src.orientation.conjugate();
  return {r, dst.position - r * src.position};
}

/// Pose of `child` expressed in the frame of `parent` (parent⁻¹ ∘ child).
template <typename Scalar>
PoseT<Scalar> relative_pose(const PoseT<Scalar>& parent, const PoseT<Scalar>& child) {
  const Quat<Scalar> inv = parent.orientation.conjugate();
  return PoseT<Scalar>(inv * (child.position - parent.position), inv * child.orientation);
}

/// Position and geodesic distances between two poses.
template <typename Scalar>
std::pair<Scalar, Scalar> pose_error(const PoseT<Scalar>& a, const PoseT<Scalar>& b) {
  return {(a.position - b.position).norm(), geodesic_angle(a.orientation, b.orientation)};
}

/// Axis-aligned box in world coordinates.
template <typename Scalar>
struct BoxT {
  Vec3<Scalar> lo = Vec3<Scalar>::Zero();
  Vec3<Scalar> hi = Vec3<Scalar>::Zero();

  bool contains(const Vec3<Scalar>& p, Scalar tol = Scalar(0)) const {
    return ((p.array() >= lo.array() - tol) && (p.array() <= hi.array() + tol)).all();
  }
  bool degenerate() const { return !(hi.array() > lo.array()).all(); }
  Vec3<Scalar> clamp(const Vec3<Scalar>& p) const { return p.cwiseMax(lo).cwiseMin(hi); }

  friend bool operator==(const BoxT& a, const BoxT& b) { return a.lo == b.lo && a.hi == b.hi; }
};

using Vector3 = Vec3<double>;
using Quaternion = Quat<double>;
using Pose = PoseT<double>;
using SE3Transform = SE3TransformT<double>;
using Box = BoxT<double>;

}  // namespace trajaug

#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <span>
#include <vector>

namespace graspforge {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Axis-angle rotation vector (radians times unit axis).
struct RotationAA {
  Vec3 v = Vec3::Zero();

  RotationAA() = default;
  explicit RotationAA(const Vec3& value) : v(value) {}
  RotationAA(double x, double y, double z) : v(x, y, z) {}

  double angle() const { return v.norm(); }
};

/// First two columns of a rotation matrix; not required to be orthonormal.
struct Rotation6D {
  Vec3 col0 = Vec3::UnitX();
  Vec3 col1 = Vec3::UnitY();
};

struct CameraIntrinsics {
  double fx = 400.0;
  double fy = 400.0;
  double cx = 128.0;
  double cy = 128.0;
  int width = 256;
  int height = 256;

  /// Throws InvalidParameter unless fx, fy > 0 and the principal point is
  /// inside the image.
  void validate() const;
};

/// x -> scale * rotation * x + translation
struct Similarity {
  double scale = 1.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return scale * (rotation * p) + translation; }
};

/// Rigid object pose: x_camera = rotation * x_object + translation.
struct RigidPose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  Vec3 apply_inverse(const Vec3& p) const { return rotation.transpose() * (p - translation); }
};

Mat3 aa_to_matrix(const RotationAA& r);

/// Returns the canonical axis-angle of a rotation matrix (angle in [0, pi]).
RotationAA matrix_to_aa(const Mat3& m);

/// Wraps the rotation angle into [0, pi], flipping the axis when needed.
RotationAA canonical(const RotationAA& r);

/// Gram-Schmidt orthonormalization of the two stored columns. Throws
/// DegenerateRotation when a column vanishes or the columns are parallel
/// (relative tolerance 1e-9).
Mat3 rot6d_to_matrix(const Rotation6D& r);
Rotation6D matrix_to_rot6d(const Mat3& m);

/// Pinhole projection of a camera-frame point to pixel coordinates.
/// Throws BehindCamera when p.z <= 1e-6.
Vec2 project_pinhole(const Vec3& p, const CameraIntrinsics& k);
Vec3 unproject_pinhole(const Vec2& uv, double depth, const CameraIntrinsics& k);

/// Nearest rotation in the Frobenius sense (SVD projection with det fix).
Mat3 project_to_rotation(const Mat3& m);

/// Weighted chordal L2 mean: the weighted sum of rotation matrices projected
/// back onto SO(3).
Mat3 chordal_mean(std::span<const Mat3> rotations, std::span<const double> weights);

enum class AlignMode { Similarity, Rigid };

struct Alignment {
  Similarity transform;
  double residual = 0.0;  ///< sum of squared distances after alignment
};

/// Least-squares alignment of source onto target (Umeyama). Rigid mode pins
/// the scale to 1. Throws DimensionMismatch on unequal counts and
/// DegenerateConfiguration for fewer than 3 points or collinear sources.
Alignment procrustes_align(std::span<const Vec3> source, std::span<const Vec3> target,
                           AlignMode mode = AlignMode::Similarity);

inline Mat3 skew(const Vec3& v) {
  Mat3 s;
  s << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return s;
}

/// Geodesic angle between two rotation matrices, radians.
double rotation_angle_between(const Mat3& a, const Mat3& b);

}  // namespace graspforge

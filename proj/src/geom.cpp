#include "graspforge/geom.hpp"

#include "graspforge/error.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace graspforge {

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw InvalidParameter("focal lengths must be positive");
  if (width <= 0 || height <= 0) throw InvalidParameter("image size must be positive");
  if (cx < 0.0 || cx > width || cy < 0.0 || cy > height)
    throw InvalidParameter("principal point outside the image");
}

Mat3 aa_to_matrix(const RotationAA& r) {
  const double theta2 = r.v.squaredNorm();
  const Mat3 k = skew(r.v);
  if (theta2 < 1e-16) {
    // second-order Taylor expansion, exact to machine precision here
    return Mat3::Identity() + k + 0.5 * k * k;
  }
  const double theta = std::sqrt(theta2);
  const double a = std::sin(theta) / theta;
  const double b = (1.0 - std::cos(theta)) / theta2;
  return Mat3::Identity() + a * k + b * k * k;
}

RotationAA matrix_to_aa(const Mat3& m) {
  Eigen::Quaterniond q(m);
  q.normalize();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  const Vec3 xyz = q.vec();
  const double n = xyz.norm();
  if (n < 1e-12) return RotationAA(2.0 * xyz);
  const double angle = 2.0 * std::atan2(n, q.w());
  return RotationAA(xyz / n * angle);
}

RotationAA canonical(const RotationAA& r) {
  const double theta = r.v.norm();
  if (theta <= std::numbers::pi) return r;
  const double two_pi = 2.0 * std::numbers::pi;
  Vec3 axis = r.v / theta;
  double wrapped = std::fmod(theta, two_pi);
  if (wrapped > std::numbers::pi) {
    wrapped = two_pi - wrapped;
    axis = -axis;
  }
  return RotationAA(axis * wrapped);
}

Mat3 rot6d_to_matrix(const Rotation6D& r) {
  const double n0 = r.col0.norm();
  if (!(n0 > 1e-12)) throw DegenerateRotation("first column vanishes");
  const Vec3 b0 = r.col0 / n0;
  const Vec3 ortho = r.col1 - b0.dot(r.col1) * b0;
  const double n1 = ortho.norm();
  if (!(n1 > 1e-9 * std::max(1.0, r.col1.norm())))
    throw DegenerateRotation("columns are parallel");
  const Vec3 b1 = ortho / n1;
  Mat3 m;
  m.col(0) = b0;
  m.col(1) = b1;
  m.col(2) = b0.cross(b1);
  return m;
}

Rotation6D matrix_to_rot6d(const Mat3& m) { return Rotation6D{m.col(0), m.col(1)}; }

Vec2 project_pinhole(const Vec3& p, const CameraIntrinsics& k) {
  if (!(p.z() > 1e-6)) throw BehindCamera("depth " + std::to_string(p.z()));
  return {k.fx * p.x() / p.z() + k.cx, k.fy * p.y() / p.z() + k.cy};
}

Vec3 unproject_pinhole(const Vec2& uv, double depth, const CameraIntrinsics& k) {
  return {(uv.x() - k.cx) / k.fx * depth, (uv.y() - k.cy) / k.fy * depth, depth};
}

Mat3 project_to_rotation(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) d(2, 2) = -1.0;
  return svd.matrixU() * d * svd.matrixV().transpose();
}

Mat3 chordal_mean(std::span<const Mat3> rotations, std::span<const double> weights) {
  if (rotations.size() != weights.size())
    throw DimensionMismatch("rotation and weight counts differ");
  if (rotations.empty()) throw InvalidParameter("chordal mean of an empty set");
  Mat3 sum = Mat3::Zero();
  for (std::size_t i = 0; i < rotations.size(); ++i) sum += weights[i] * rotations[i];
  return project_to_rotation(sum);
}

Alignment procrustes_align(std::span<const Vec3> source, std::span<const Vec3> target,
                           AlignMode mode) {
  if (source.size() != target.size())
    throw DimensionMismatch("source has " + std::to_string(source.size()) +
                            " points, target has " + std::to_string(target.size()));
  const auto n = static_cast<Eigen::Index>(source.size());
  if (n < 3) throw DegenerateConfiguration("need at least 3 correspondences");

  Eigen::Matrix3Xd src(3, n), dst(3, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    src.col(i) = source[static_cast<std::size_t>(i)];
    dst.col(i) = target[static_cast<std::size_t>(i)];
  }
  const Eigen::Matrix3Xd src_c = src.colwise() - src.rowwise().mean();
  Eigen::JacobiSVD<Mat3> spread(src_c * src_c.transpose());
  const Vec3 sv = spread.singularValues();
  if (!(sv(1) > 1e-12 * std::max(sv(0), 1e-300)))
    throw DegenerateConfiguration("source points are collinear");

  const Eigen::Matrix4d m = Eigen::umeyama(src, dst, mode == AlignMode::Similarity);
  Alignment out;
  out.transform.scale = mode == AlignMode::Similarity ? m.topLeftCorner<3, 3>().col(0).norm() : 1.0;
  out.transform.rotation = m.topLeftCorner<3, 3>() / out.transform.scale;
  out.transform.translation = m.topRightCorner<3, 1>();

  double residual = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    residual += (out.transform.apply(src.col(i)) - dst.col(i)).squaredNorm();
  out.residual = residual;
  return out;
}

double rotation_angle_between(const Mat3& a, const Mat3& b) {
  return matrix_to_aa(a.transpose() * b).angle();
}

}  // namespace graspforge

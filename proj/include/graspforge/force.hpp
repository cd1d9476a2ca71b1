#pragma once

#include "graspforge/geom.hpp"
#include "graspforge/hand.hpp"

#include <Eigen/Core>

#include <span>
#include <vector>

namespace graspforge {

/// Polyhedral friction cone: v_j = (mu sin(2 pi j / N), mu cos(2 pi j / N), 1)
/// for j = 1..N, expressed in the anchor's local frame.
struct FrictionConeBasis {
  double mu = 1.0;
  int count = 12;
  std::vector<Vec3> vectors;
};

/// Throws InvalidParameter unless mu > 0 and count >= 3.
FrictionConeBasis cone_basis(double mu = 1.0, int count = 12);

/// Per-anchor simplex weights (rows of w) and nonnegative scales s.
struct ForceCoefficients {
  Eigen::MatrixXd w;  ///< anchors x basis vectors
  Eigen::VectorXd s;  ///< anchors

  /// Throws InvalidParameter when a row leaves the simplex or a scale is negative.
  void validate(double tolerance = 1e-9) const;
};

struct ContactForce {
  Vec3 position = Vec3::Zero();  ///< anchor position, camera frame
  Vec3 force = Vec3::Zero();     ///< camera frame, multiples of |G|
};

using GlobalForceField = std::vector<ContactForce>;

/// Gravity acting on the object. The magnitude is a relative unit (1 by
/// default); the camera y-axis points down, hence the default direction.
struct Gravity {
  Vec3 direction = Vec3::UnitY();
  double magnitude = 1.0;

  Vec3 vector() const { return magnitude * direction; }
};

/// F'_k = s_k * sum_j w_kj v_j. Throws DimensionMismatch when w does not have
/// one column per basis vector or s does not match the rows of w.
std::vector<Vec3> local_forces(const ForceCoefficients& c, const FrictionConeBasis& basis);

/// F_k = R_k F'_k, paired with the anchor positions.
GlobalForceField global_forces(std::span<const Vec3> local, std::span<const AnchorState> anchors);

}  // namespace graspforge

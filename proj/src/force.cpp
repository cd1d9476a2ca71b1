#include "graspforge/force.hpp"

#include "graspforge/error.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace graspforge {

FrictionConeBasis cone_basis(double mu, int count) {
  if (!(mu > 0.0) || !std::isfinite(mu)) throw InvalidParameter("friction coefficient must be positive");
  if (count < 3) throw InvalidParameter("need at least 3 cone basis vectors");
  FrictionConeBasis b;
  b.mu = mu;
  b.count = count;
  b.vectors.reserve(static_cast<std::size_t>(count));
  for (int j = 1; j <= count; ++j) {
    const double angle = 2.0 * std::numbers::pi * j / count;
    b.vectors.emplace_back(mu * std::sin(angle), mu * std::cos(angle), 1.0);
  }
  return b;
}

void ForceCoefficients::validate(double tolerance) const {
  if (w.rows() != s.size()) throw DimensionMismatch("w and s disagree on the anchor count");
  for (Eigen::Index k = 0; k < w.rows(); ++k) {
    if (w.row(k).minCoeff() < -tolerance || std::abs(w.row(k).sum() - 1.0) > tolerance)
      throw InvalidParameter("weights of anchor " + std::to_string(k) + " leave the simplex");
    if (s(k) < -tolerance) throw InvalidParameter("scale of anchor " + std::to_string(k) + " is negative");
  }
}

std::vector<Vec3> local_forces(const ForceCoefficients& c, const FrictionConeBasis& basis) {
  if (c.w.cols() != basis.count)
    throw DimensionMismatch("w has " + std::to_string(c.w.cols()) + " columns for " +
                            std::to_string(basis.count) + " basis vectors");
  if (c.w.rows() != c.s.size()) throw DimensionMismatch("w and s disagree on the anchor count");
  std::vector<Vec3> out(static_cast<std::size_t>(c.w.rows()), Vec3::Zero());
  for (Eigen::Index k = 0; k < c.w.rows(); ++k) {
    Vec3 sum = Vec3::Zero();
    for (int j = 0; j < basis.count; ++j) sum += c.w(k, j) * basis.vectors[j];
    out[k] = c.s(k) * sum;
  }
  return out;
}

GlobalForceField global_forces(std::span<const Vec3> local, std::span<const AnchorState> anchors) {
  if (local.size() != anchors.size())
    throw DimensionMismatch(std::to_string(local.size()) + " forces for " +
                            std::to_string(anchors.size()) + " anchors");
  GlobalForceField field(local.size());
  for (std::size_t k = 0; k < local.size(); ++k) {
    field[k].position = anchors[k].position;
    field[k].force = anchors[k].frame * local[k];
  }
  return field;
}

}  // namespace graspforge

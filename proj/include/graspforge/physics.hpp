#pragma once

#include "graspforge/force.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace graspforge {

/// Signed anchor-to-surface distances (meters, positive outside the object)
/// and the torque origin.
struct ContactState {
  std::vector<double> distances;
  Vec3 center_of_mass = Vec3::Zero();
};

struct PhysicsResiduals {
  double force = 0.0;
  double torque = 0.0;
  double contact = 0.0;
  double contact2 = 0.0;
};

/// |sum F_k + G|^2. G is the gravity vector itself (pointing down), so a
/// supporting hand pushes against it and the residual vanishes at balance.
double force_residual(const GlobalForceField& field, const Gravity& g);

/// |sum F_k x r_k|^2 with r_k = position_k - c.
double torque_residual(const GlobalForceField& field, const Vec3& c);

/// sum |F_k| |d_k|. Throws DimensionMismatch on a count mismatch.
double contact_residual(const GlobalForceField& field, const ContactState& contact);

/// The contact mapping 1 / ((1 + e^{-16(d+1)}) (1 + e^{-16(d-0.75)})).
double omega(double d);
/// log(omega(d)) without underflow for very negative d.
double log_omega(double d);

/// How a metric signed distance becomes the argument of omega:
/// omega(sign * unit_scale * d + offset).
///
/// The mapping increases with its argument, so applied verbatim to an
/// outside-positive distance it freezes touching anchors and activates distant
/// ones. The defaults flip the sign and shift by 1.5 cm so that the likelihood
/// is near 1 up to 0.75 cm from the surface (and inside it), and falls below
/// the 0.1 freeze threshold past about 0.89 cm. Set sign = 1, offset = 0 for
/// the literal reading; unit_scale = 1 feeds meters instead of centimeters.
struct OmegaConfig {
  double unit_scale = 100.0;
  double sign = -1.0;
  double offset = 1.5;

  double argument(double distance_m) const { return sign * unit_scale * distance_m + offset; }
  double operator()(double distance_m) const { return omega(argument(distance_m)); }
  double log(double distance_m) const { return log_omega(argument(distance_m)); }
};

inline constexpr double kContact2Epsilon = 1e-5;

/// sum_k log^2( W_k sqrt(sum s_i^2) / (s_k sqrt(sum W_i^2) + eps) ) where
/// W_k = cfg(d_k). When `active` is non-empty, only anchors with a nonzero
/// entry enter the outer sum and both norms.
double contact2_residual(std::span<const double> s, std::span<const double> distances,
                         const OmegaConfig& cfg = {}, std::span<const std::uint8_t> active = {});

/// Evaluates all four residuals for one force field.
PhysicsResiduals evaluate_residuals(const GlobalForceField& field, std::span<const double> s,
                                    const ContactState& contact, const Gravity& g,
                                    const OmegaConfig& cfg = {},
                                    std::span<const std::uint8_t> active = {});

/// -L_force * L_contact
double hand_phys_score(const PhysicsResiduals& r);
/// -L_torque * L_contact
double object_phys_score(const PhysicsResiduals& r);

}  // namespace graspforge

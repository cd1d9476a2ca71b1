#include "graspforge/physics.hpp"

#include "graspforge/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace graspforge {

namespace {

// log(1 + e^z) without overflow.
double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

}  // namespace

double force_residual(const GlobalForceField& field, const Gravity& g) {
  Vec3 sum = g.vector();
  for (const auto& f : field) sum += f.force;
  return sum.squaredNorm();
}

double torque_residual(const GlobalForceField& field, const Vec3& c) {
  Vec3 tau = Vec3::Zero();
  for (const auto& f : field) tau += f.force.cross(f.position - c);
  return tau.squaredNorm();
}

double contact_residual(const GlobalForceField& field, const ContactState& contact) {
  if (contact.distances.size() != field.size())
    throw DimensionMismatch(std::to_string(contact.distances.size()) + " distances for " +
                            std::to_string(field.size()) + " forces");
  double sum = 0.0;
  for (std::size_t k = 0; k < field.size(); ++k) sum += field[k].force.norm() * std::abs(contact.distances[k]);
  return sum;
}

double log_omega(double d) { return -softplus(-16.0 * (d + 1.0)) - softplus(-16.0 * (d - 0.75)); }

double omega(double d) { return std::exp(log_omega(d)); }

double contact2_residual(std::span<const double> s, std::span<const double> distances, const OmegaConfig& cfg,
                         std::span<const std::uint8_t> active) {
  if (s.size() != distances.size())
    throw DimensionMismatch(std::to_string(s.size()) + " scales for " + std::to_string(distances.size()) +
                            " distances");
  if (!active.empty() && active.size() != s.size()) throw DimensionMismatch("active mask has the wrong length");
  const auto on = [&](std::size_t k) { return active.empty() || active[k] != 0; };

  std::vector<double> log_w(s.size());
  double max_log = -std::numeric_limits<double>::infinity();
  double s2 = 0.0;
  for (std::size_t k = 0; k < s.size(); ++k) {
    if (!on(k)) continue;
    log_w[k] = cfg.log(distances[k]);
    max_log = std::max(max_log, log_w[k]);
    s2 += s[k] * s[k];
  }
  if (!std::isfinite(max_log)) return 0.0;
  double acc = 0.0;
  for (std::size_t k = 0; k < s.size(); ++k)
    if (on(k)) acc += std::exp(2.0 * (log_w[k] - max_log));
  const double norm_w = std::exp(max_log + 0.5 * std::log(acc));
  const double log_s = 0.5 * std::log(s2);  // -inf when all scales vanish

  double sum = 0.0;
  for (std::size_t k = 0; k < s.size(); ++k) {
    if (!on(k)) continue;
    const double l = log_w[k] + log_s - std::log(s[k] * norm_w + kContact2Epsilon);
    sum += l * l;
  }
  return sum;
}

PhysicsResiduals evaluate_residuals(const GlobalForceField& field, std::span<const double> s,
                                    const ContactState& contact, const Gravity& g, const OmegaConfig& cfg,
                                    std::span<const std::uint8_t> active) {
  PhysicsResiduals r;
  r.force = force_residual(field, g);
  r.torque = torque_residual(field, contact.center_of_mass);
  r.contact = contact_residual(field, contact);
  r.contact2 = contact2_residual(s, contact.distances, cfg, active);
  return r;
}

double hand_phys_score(const PhysicsResiduals& r) { return -r.force * r.contact; }

double object_phys_score(const PhysicsResiduals& r) { return -r.torque * r.contact; }

}  // namespace graspforge

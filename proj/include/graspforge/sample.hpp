#pragma once

#include "graspforge/geom.hpp"
#include "graspforge/hand.hpp"

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace graspforge {

/// Variance-exploding schedule sigma(t) = sigma_min (sigma_max / sigma_min)^t.
struct NoiseSchedule {
  double sigma_min = 0.01;
  double sigma_max = 50.0;
  double eps_time = 1e-5;

  /// Throws InvalidParameter unless 0 < sigma_min < sigma_max and 0 < eps_time < 1.
  void validate() const;
};

/// Throws OutOfRange for t outside [0, 1].
double sigma(double t, const NoiseSchedule& s = {});

/// (x, t) -> grad_x log p_t(x). Must return a vector of the input's size.
using ScoreField = std::function<Eigen::VectorXd(const Eigen::VectorXd&, double)>;

/// Isotropic-per-coordinate Gaussian prior N(mu, diag(sigma0^2)) diffused by
/// the schedule: score = -(x - mu) / (sigma0^2 + sigma(t)^2).
ScoreField gaussian_score(Eigen::VectorXd mu, Eigen::VectorXd sigma0, const NoiseSchedule& s = {});

struct MixtureComponent {
  double weight = 1.0;
  Eigen::VectorXd mean;
  double sigma0 = 0.0;
};

/// Gaussian mixture diffused by the schedule. Responsibilities are evaluated
/// in the log domain. Throws InvalidParameter on empty or inconsistent input.
ScoreField mixture_score(std::vector<MixtureComponent> components, const NoiseSchedule& s = {});

struct OdeTolerances {
  double atol = 1e-6;
  double rtol = 1e-6;
  std::size_t max_failed_steps = 500;  ///< consecutive rejections before StepSizeUnderflow
};

/// Integrates dx/dt = -sigma(t) sigma'(t) score(x, t) from t_start down to
/// t_end with adaptive Dormand-Prince 5(4).
/// Throws OutOfRange unless t_start > t_end >= eps_time (and t_start <= 1),
/// DimensionMismatch for a score of the wrong size, NonFiniteState and
/// StepSizeUnderflow.
Eigen::VectorXd pf_ode_solve(const Eigen::VectorXd& x_start, double t_start, double t_end, const ScoreField& score,
                             const NoiseSchedule& schedule = {}, const OdeTolerances& tol = {});

/// Seed of a named, indexed substream (splitmix64 mixing). Lets every
/// candidate draw its own numbers, so parallel and serial runs agree.
std::uint64_t substream_seed(std::uint64_t seed, std::string_view stream, std::uint64_t index = 0);

/// N draws from N(0, sigma(t_f)^2 I) in `dim` dimensions, each carried to
/// eps_time by pf_ode_solve.
std::vector<Eigen::VectorXd> pf_ode_sample(int n, int dim, double t_f, const ScoreField& score,
                                           const NoiseSchedule& schedule, std::uint64_t seed,
                                           const OdeTolerances& tol = {}, int threads = 1);

inline constexpr const char* kCandidatesSchema = "candidates.v1";

enum class Entity { Hand, Object };
std::string to_string(Entity e);
Entity entity_from_string(const std::string& name);  ///< throws InvalidParameter

using HandCandidate = std::array<Rotation6D, kNumJoints>;

struct ObjectCandidate {
  Rotation6D rotation;
  Vec3 translation = Vec3::Zero();
};

struct CandidateSet {
  Entity entity = Entity::Hand;
  std::uint64_t seed = 0;
  std::vector<HandCandidate> hand;      ///< used when entity == Hand
  std::vector<ObjectCandidate> object;  ///< used when entity == Object
  nlohmann::json provenance = nlohmann::json::object();

  std::size_t size() const { return entity == Entity::Hand ? hand.size() : object.size(); }
  /// Throws InvalidParameter when empty, non-finite or mixing entities.
  void validate() const;
  nlohmann::json to_json() const;
  static CandidateSet from_json(const nlohmann::json& j);
};

CandidateSet load_candidates(const std::filesystem::path& path);
void save_candidates(const CandidateSet& set, const std::filesystem::path& path);

/// Flat layouts used by the score fields: hand = 16 x (col0, col1), object =
/// (col0, col1, translation).
Eigen::VectorXd flatten(const HandCandidate& c);
Eigen::VectorXd flatten(const ObjectCandidate& c);
HandCandidate hand_candidate_from(const Eigen::VectorXd& x);
ObjectCandidate object_candidate_from(const Eigen::VectorXd& x);

HandCandidate to_candidate(const HandPose& pose);
ObjectCandidate to_candidate(const RigidPose& pose);
/// Converts through rot6d_to_matrix; the wrist translation comes from outside.
HandPose to_hand_pose(const HandCandidate& c, const Vec3& translation);
RigidPose to_rigid_pose(const ObjectCandidate& c);

inline constexpr double kHandTf = 0.55;
inline constexpr double kObjectTf = 0.65;

struct SampleOptions {
  int n = 100;
  double t_f = kHandTf;
  NoiseSchedule schedule;
  OdeTolerances tolerances;
  int threads = 1;
};

/// PF-ODE candidates for one entity. Vectors are mapped back through
/// hand_candidate_from / object_candidate_from. Throws InvalidParameter for
/// n < 1 and DimensionMismatch for a score field that does not fit the entity.
CandidateSet sample_candidates(Entity entity, const ScoreField& score, std::uint64_t seed,
                               const SampleOptions& opt = {}, const nlohmann::json& score_description = {});

struct PerturbationSpec {
  double rotation_sigma = 0.08;     ///< radians, per axis of the tangent vector
  double translation_sigma = 0.01;  ///< meters, per axis
  bool include_reference = false;
};

/// R_j Exp(delta_j) for every joint, delta_j ~ N(0, sigma^2 I).
CandidateSet perturb_hand(const HandPose& reference, const PerturbationSpec& spec, int n, std::uint64_t seed);
/// (R Exp(delta), T + e).
CandidateSet perturb_object(const RigidPose& reference, const PerturbationSpec& spec, int n, std::uint64_t seed);

}  // namespace graspforge

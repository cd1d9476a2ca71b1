#pragma once

#include "graspforge/force.hpp"
#include "graspforge/hand.hpp"
#include "graspforge/mesh.hpp"
#include "graspforge/physics.hpp"

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <vector>

namespace graspforge {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;  ///< decoupled, as in AdamW
};

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long step = 0;
};

/// One bias-corrected Adam update of x in place. Moments are sized lazily on
/// the first call. Throws NonFiniteGradient or DimensionMismatch.
void adam_step(Eigen::VectorXd& x, AdamState& state, const Eigen::VectorXd& gradient, const AdamConfig& cfg);

struct SolverConfig {
  double learning_rate = 1e-3;
  int phase1_steps = 300;
  int phase2_steps = 2700;
  double weight_force = 1.0;
  double weight_torque = 30.0;
  double weight_contact2 = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
  double mu = 1.0;
  int cone_count = 12;
  double init_scale = 0.05;        ///< starting |s~| of unfrozen anchors
  double freeze_threshold = 0.1;   ///< anchors with omega below this start frozen
  OmegaConfig omega;
  int log_interval = 10;
  int convergence_window = 50;
  double convergence_tolerance = 1e-6;

  /// Throws InvalidParameter on nonpositive rates or negative step counts.
  void validate() const;
  AdamConfig adam() const;
  nlohmann::json to_json() const;
  static SolverConfig from_json(const nlohmann::json& j);
};

/// Unconstrained solver variables: w = row-softmax(w_tilde), s = |s_tilde|.
struct ReparamVars {
  Eigen::MatrixXd w_tilde;
  Eigen::VectorXd s_tilde;
  std::vector<std::uint8_t> frozen;  ///< nonzero: s_tilde pinned at 0

  ForceCoefficients coefficients() const;
  int active_count() const;
};

/// Frozen where cfg.omega(d_k) < cfg.freeze_threshold (s_tilde = 0), otherwise
/// s_tilde = cfg.init_scale; w_tilde uniform 1/N_v.
ReparamVars init_coefficients(const ContactState& contact, const SolverConfig& cfg = {});

/// Everything the optimizer sees: anchors and distances are fixed for the solve.
struct ForceProblem {
  std::vector<AnchorState> anchors;
  ContactState contact;
  Gravity gravity;
  FrictionConeBasis basis = cone_basis();
  OmegaConfig omega;
};

struct ObjectiveWeights {
  double force = 1.0;
  double torque = 0.0;
  double contact2 = 0.0;
};

struct ObjectiveValue {
  double value = 0.0;
  PhysicsResiduals terms;   ///< all four residuals (contact2 over unfrozen anchors)
  Eigen::MatrixXd grad_w;   ///< d value / d w_tilde
  Eigen::VectorXd grad_s;   ///< d value / d s_tilde (0 at s_tilde = 0)
};

/// Weighted objective with analytic gradients. L_contact2 only involves
/// unfrozen anchors: a frozen anchor's log-likelihood would otherwise dominate.
ObjectiveValue evaluate_objective(const ReparamVars& vars, const ForceProblem& problem,
                                  const ObjectiveWeights& weights, bool with_gradient = true);

struct TraceEntry {
  int step = 0;
  double force = 0.0;
  double torque = 0.0;
  double contact2 = 0.0;
  double objective = 0.0;
};

struct PhaseResult {
  std::vector<TraceEntry> trace;   ///< step 0, every log_interval steps, and the last step
  std::vector<double> objective;   ///< objective after every step
  double min_equilibrium = 0.0;    ///< min over steps of L_force + 30 L_torque
  int steps = 0;
};

/// Optimizes w_tilde against L_force with s_tilde held fixed.
/// Throws AllAnchorsFrozen.
PhaseResult solve_phase1(ReparamVars& vars, const ForceProblem& problem, const SolverConfig& cfg = {});

/// Optimizes w_tilde and unfrozen s_tilde against the weighted objective.
/// Throws AllAnchorsFrozen.
PhaseResult solve_phase2(ReparamVars& vars, const ForceProblem& problem, const SolverConfig& cfg = {});

struct SolveReport {
  ForceCoefficients coefficients;
  std::vector<std::uint8_t> frozen;
  std::vector<TraceEntry> phase1_trace;
  std::vector<TraceEntry> phase2_trace;
  int phase1_steps = 0;
  int phase2_steps = 0;
  /// True when the final phase plateaued or ran its full step budget; the
  /// solver has no early exit, so a completed solve always reports true.
  bool converged = false;
  bool plateaued = false;  ///< window-mean decrease below tolerance at the end
  GlobalForceField field;
  PhysicsResiduals residuals;
  double min_equilibrium = 0.0;

  nlohmann::json to_json() const;
};

/// True when the mean objective over the last `window` steps is less than
/// `tolerance` below the mean over the window before it.
bool plateaued(const std::vector<double>& objective, int window, double tolerance);

/// init -> phase 1 -> phase 2 on a prepared problem.
SolveReport solve_forces(const ForceProblem& problem, const SolverConfig& cfg = {});

/// Skins the hand, places the anchors, measures their signed distances to the
/// posed object and takes the torque origin at the object's volumetric
/// centroid (camera frame).
ForceProblem make_force_problem(const HandModel& model, const HandPose& pose, const MeshSdf& object,
                                const RigidPose& object_pose, const Gravity& gravity,
                                const SolverConfig& cfg = {});

SolveReport solve_pseudo_forces(const HandModel& model, const HandPose& pose, const MeshSdf& object,
                                const RigidPose& object_pose, const Gravity& gravity,
                                const SolverConfig& cfg = {});

}  // namespace graspforge

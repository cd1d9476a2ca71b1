#pragma once

#include "graspforge/force.hpp"
#include "graspforge/geom.hpp"
#include "graspforge/hand.hpp"
#include "graspforge/heatmap.hpp"
#include "graspforge/mesh.hpp"
#include "graspforge/sample.hpp"
#include "graspforge/scenario.hpp"
#include "graspforge/solve.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <span>
#include <vector>

namespace graspforge {

inline constexpr const char* kAggregationSchema = "aggregation.v1";

struct AggregationConfig {
  int hand_k = 30;          ///< visual top-K per hand joint
  int object_t_k = 10;      ///< visual top-K for object translation
  int object_r_k = 10;      ///< visual top-K for object rotation
  int hand_phys_k = 5;
  int object_phys_k = 5;
  bool physics = true;      ///< false: visual aggregation only
  SolverConfig hand_solver = reduced_solver();  ///< per hand candidate
  SolverConfig object_solver;                   ///< one solve on the aggregated hand
  int threads = 1;

  /// Phase 1 only, 300 steps.
  static SolverConfig reduced_solver();
  /// Throws InvalidParameter for nonpositive K values.
  void validate() const;
  nlohmann::json to_json() const;
  static AggregationConfig from_json(const nlohmann::json& j);
};

/// Indices of the k largest scores, best first; ties go to the lower index
/// and NaN ranks below everything. k is clipped to the score count.
std::vector<int> top_k(std::span<const double> scores, int k);

/// Heatmap value under each of the 21 projected keypoints (0 behind the camera).
std::array<double, kNumKeypoints> keypoint_responses(std::span<const Vec3> keypoints, const HeatmapStack& heatmaps,
                                                     const CameraIntrinsics& camera);

/// Sum of the heatmap responses over the keypoints downstream of `joint`.
/// Throws BadChannel unless the stack has 21 channels.
double visual_score_hand(const HandPose& pose, int joint, const HeatmapStack& heatmaps,
                         const CameraIntrinsics& camera, const HandModel& model);

struct JointSelection {
  int joint = 0;
  std::vector<int> selected;      ///< top-K candidate indices, best first
  std::vector<double> scores;     ///< their scores
  RotationAA value;               ///< aggregated parameter
  bool fallback = false;          ///< zero score sum: unweighted mean used
};

/// Weighted mean of canonical axis-angle vectors; unweighted when the weights
/// do not sum to a positive number.
RotationAA weighted_mean(std::span<const RotationAA> values, std::span<const double> weights, bool* fallback = nullptr);

/// Aggregates every joint of `level` (0-based) from scores[j][i] and writes the
/// result into all candidates.
std::vector<JointSelection> aggregate_hand_level(std::vector<HandPose>& candidates, int level,
                                                 const std::array<std::vector<double>, kNumJoints>& scores, int k);

struct HandVisualResult {
  HandPose pose;
  std::vector<std::vector<JointSelection>> levels;  ///< in processing order
  std::vector<int> k4;                              ///< top-K by summed last-level score
  std::vector<double> k4_scores;
  std::vector<HandPose> before_last;  ///< candidates right before the last level was overwritten
};

/// Levels are processed in `order` (default 0, 1, 2, 3); each level is scored
/// after the previous ones were overwritten.
HandVisualResult visual_aggregate_hand(std::vector<HandPose> candidates, const HeatmapStack& heatmaps,
                                       const CameraIntrinsics& camera, const HandModel& model,
                                       const AggregationConfig& cfg, std::array<int, 4> order = {0, 1, 2, 3});

/// Sum over the 27 box keypoints of the object heatmap response.
double visual_score_object(const RigidPose& pose, const HeatmapStack& heatmaps, const CameraIntrinsics& camera,
                           const ObjectKeypoints27& keypoints);

struct ObjectVisualResult {
  RigidPose pose;
  std::vector<int> k_t;
  std::vector<double> t_scores;
  std::vector<int> k_r;
  std::vector<double> r_scores;
  std::vector<Vec3> translations;  ///< retained K_T translations
  std::vector<Mat3> rotations;     ///< retained K_R rotations
  bool fallback_t = false;
  bool fallback_r = false;
};

/// Translation first (weighted mean), then every candidate takes that
/// translation and rotation is re-scored and averaged (weighted chordal mean).
ObjectVisualResult visual_aggregate_object(const std::vector<RigidPose>& candidates, const HeatmapStack& heatmaps,
                                           const CameraIntrinsics& camera, const ObjectKeypoints27& keypoints,
                                           const AggregationConfig& cfg);

/// -L_force * L_contact, or -inf when every anchor is frozen.
double hand_physics_score(const SolveReport& report);

struct HandPhysicsResult {
  HandPose pose;
  std::vector<int> candidates;  ///< K_4 candidate indices, in K_4 order
  std::vector<double> scores;   ///< physics score of each
  std::vector<int> selected;    ///< chosen candidate indices, best first
  bool fallback = false;        ///< no finite score: visual result kept
};

/// Re-ranks K_4 candidates (their last-level joints on top of the visual pose)
/// against the given object pose and averages the best last-level joints.
HandPhysicsResult physics_aggregate_hand(const HandPose& visual, const std::vector<HandPose>& before_last,
                                         std::span<const int> k4, const HandModel& model, const MeshSdf& object,
                                         const RigidPose& object_pose, const Gravity& gravity,
                                         const AggregationConfig& cfg);

struct ObjectPhysicsResult {
  RigidPose pose;
  std::vector<std::array<int, 2>> pairs;  ///< (translation slot, rotation slot), translation-major
  std::vector<double> scores;
  std::vector<int> selected;              ///< pair indices, best first
  bool fallback = false;
};

/// Scores -L_torque * L_contact for a fixed force field against the object
/// placed at `pose`: distances and centre of mass follow the pose.
double object_physics_score(const GlobalForceField& field, const MeshSdf& object, const Vec3& object_centroid,
                            const RigidPose& pose);

/// Solves forces once for the final hand against `visual_pose`, then scores
/// every (translation, rotation) pair of the retained sets.
ObjectPhysicsResult physics_aggregate_object(std::span<const Vec3> translations, std::span<const Mat3> rotations,
                                             const RigidPose& visual_pose, const HandModel& model,
                                             const HandPose& hand, const MeshSdf& object, const Gravity& gravity,
                                             const AggregationConfig& cfg);

struct AggregationReport {
  AggregationConfig config;
  HandVisualResult hand_visual;
  ObjectVisualResult object_visual;
  HandPhysicsResult hand_physics;
  ObjectPhysicsResult object_physics;
  HandPose hand;       ///< final
  RigidPose object;    ///< final

  /// Scores of -inf are written as null.
  nlohmann::json to_json() const;
};

/// Hand VA, object VA, then (unless disabled) hand PA against the visual
/// object pose and object PA. Only the scenario's shape, wrist translation,
/// camera, object mesh and gravity are read; its ground-truth poses are not.
AggregationReport aggregate_full(const Scenario& scene, const CandidateSet& hand, const CandidateSet& object,
                                 const HeatmapStack& hand_heatmaps, const HeatmapStack& object_heatmaps,
                                 const AggregationConfig& cfg = {});

/// Reads the final poses back from an aggregation report.
struct AggregatedPoses {
  HandPose hand;
  RigidPose object;
};
AggregatedPoses read_aggregated_poses(const nlohmann::json& report);

}  // namespace graspforge

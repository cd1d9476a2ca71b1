#pragma once

#include "graspforge/geom.hpp"
#include "graspforge/mesh.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace graspforge {

inline constexpr int kNumJoints = 16;
inline constexpr int kNumKeypoints = 21;
inline constexpr int kNumAnchors = 32;
inline constexpr int kNumFingers = 5;
inline constexpr int kShapeDims = 10;

// Joint order follows MANO: wrist, then (MCP, PIP, DIP) for index, middle,
// pinky, ring and thumb. Keypoints 0..15 are the joints, 16..20 the tips of
// index, middle, pinky, ring, thumb.
namespace joint {
inline constexpr int kWrist = 0;
inline constexpr int kIndexMcp = 1;
inline constexpr int kMiddleMcp = 4;
inline constexpr int kPinkyMcp = 7;
inline constexpr int kRingMcp = 10;
inline constexpr int kThumbMcp = 13;
}  // namespace joint

/// First joint of finger f (0 index .. 4 thumb); its PIP and DIP follow.
constexpr int finger_root(int f) { return 1 + 3 * f; }
constexpr int finger_tip(int f) { return 16 + f; }

struct HandPose {
  std::array<RotationAA, kNumJoints> theta{};
  Vec3 translation = Vec3::Zero();  ///< wrist position, camera frame
};

using HandShape = std::array<double, kShapeDims>;

struct Anchor {
  std::string name;
  int face = 0;
  std::array<double, 3> barycentric{1.0 / 3, 1.0 / 3, 1.0 / 3};
};

/// Anchor position and local contact frame [x y z] (z = outward face normal).
struct AnchorState {
  Vec3 position = Vec3::Zero();
  Mat3 frame = Mat3::Identity();
};

struct JointHierarchy {
  std::array<std::vector<int>, 4> levels;                ///< joint indices per level
  std::array<std::vector<int>, kNumJoints> children;     ///< downstream keypoints
  std::array<int, kNumJoints> parent{};
  int level_of(int joint) const;
};

const JointHierarchy& joint_hierarchy();

/// Skeleton, tube radii, palm block and anchor layout of the canonical hand
/// at zero shape. See docs/hand_asset.md for the JSON schema.
struct HandAsset {
  struct Finger {
    std::string name;
    std::array<int, 3> joints{};
    int tip = 0;
    double radius = 0.0;
    Vec3 pad_direction = Vec3::UnitZ();
  };

  std::string schema;
  std::array<Vec3, kNumKeypoints> rest{};   ///< canonical keypoints, meters
  std::array<int, kNumKeypoints> parent{};  ///< kinematic parent of each keypoint
  std::array<Finger, kNumFingers> fingers{};
  Vec3 palm_min = Vec3::Zero();
  Vec3 palm_max = Vec3::Zero();
  std::array<int, 3> palm_grid{4, 4, 1};
  int ring_segments = 8;
  int rings_per_bone = 3;
  int cap_rings = 2;
  double weight_power = 4.0;
  std::vector<Anchor> anchors;

  static HandAsset from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  /// The versioned asset compiled into the library.
  static const HandAsset& builtin();
};

/// Rest-pose geometry of the hand for one shape vector. Immutable.
///
/// Shape mapping: global scale 1 + 0.1 tanh(beta[0]) about the wrist, and
/// per-finger phalanx length multipliers 1 + 0.1 tanh(beta[1 + f]) for f in
/// index, middle, pinky, ring, thumb. beta[6..9] are unused.
class HandModel {
 public:
  explicit HandModel(const HandShape& beta = {}, const HandAsset& asset = HandAsset::builtin());

  const HandShape& shape() const { return beta_; }
  const std::array<Vec3, kNumKeypoints>& rest_keypoints() const { return rest_; }
  const TriMesh& rest_mesh() const { return rest_mesh_; }
  const std::vector<Anchor>& anchors() const { return anchors_; }

  /// Up to two (joint, weight) influences per vertex; weights sum to 1.
  struct Influence {
    std::array<int, 2> joint{0, 0};
    std::array<double, 2> weight{1.0, 0.0};
  };
  const std::vector<Influence>& skin_weights() const { return weights_; }

  /// Builds the rest mesh and skinning weights for an arbitrary skeleton.
  /// Shared with the asset tool, which designs the anchor layout on it.
  static void build_mesh(const HandAsset& asset, const std::array<Vec3, kNumKeypoints>& rest,
                         double scale, TriMesh& mesh, std::vector<Influence>& weights);

 private:
  HandShape beta_{};
  std::array<Vec3, kNumKeypoints> rest_{};
  TriMesh rest_mesh_;
  std::vector<Influence> weights_;
  std::vector<Anchor> anchors_;
};

/// World transform of each joint: posed = rotation * (rest - rest_joint) + position.
struct JointTransforms {
  std::array<Mat3, kNumJoints> rotation{};
  std::array<Vec3, kNumJoints> position{};
};

JointTransforms joint_transforms(const HandPose& pose, const HandModel& model);

std::array<Vec3, kNumKeypoints> forward_kinematics(const HandPose& pose, const HandModel& model);

/// Linear blend skinning of the rest mesh; topology is shared with the rest mesh.
TriMesh skin_mesh(const HandPose& pose, const HandModel& model);

/// Barycentric anchor positions and triangle frames. Throws DegenerateTriangle
/// when an attached face has area below 1e-12 m^2 and DimensionMismatch on a
/// bad face index.
std::vector<AnchorState> anchor_states(const TriMesh& mesh, std::span<const Anchor> anchors);

}  // namespace graspforge

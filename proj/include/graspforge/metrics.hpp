#pragma once

#include "graspforge/geom.hpp"
#include "graspforge/hand.hpp"
#include "graspforge/mesh.hpp"
#include "graspforge/solve.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace graspforge {

/// Object-frame rotations that leave the object unchanged. A continuous axis
/// (e.g. a cylinder's) is sampled uniformly and composed with the discrete set.
struct SymmetrySpec {
  struct ContinuousAxis {
    Vec3 axis = Vec3::UnitZ();
    int samples = 360;
  };

  std::vector<Mat3> rotations{Mat3::Identity()};
  std::optional<ContinuousAxis> continuous;
  bool full_rotation = false;  ///< any rotation about the origin (spheres)

  /// Throws InvalidParameter when the identity is missing or an entry is not a rotation.
  void validate() const;
  /// Discrete set composed with the sampled continuous rotations.
  std::vector<Mat3> expanded() const;

  static SymmetrySpec none() { return {}; }
  /// Sphere: every rotation; cylinder: the z-axis plus the end-over-end flip;
  /// box: the signed axis permutations that keep its extents.
  static SymmetrySpec for_primitive(const PrimitiveSpec& spec);

  nlohmann::json to_json() const;
  static SymmetrySpec from_json(const nlohmann::json& j);
};

struct MetricsConfig {
  double contact_threshold = 0.002;  ///< meters
  int max_model_points = 2048;
  double add_fraction = 0.1;         ///< of the object diameter
  AlignMode pa_mode = AlignMode::Similarity;
};

/// Errors in mm, the two rates in percent and REP in pixels.
struct PoseErrors {
  double mje = 0.0;
  double pa_mje = 0.0;
  double mme = 0.0;
  double oce = 0.0;
  double mce = 0.0;
  double smce = 0.0;
  double add = 0.0;
  double adds = 0.0;
  double add_rate = 100.0;
  double adds_rate = 100.0;
  double rep = 0.0;
};

struct HandGeometry {
  std::array<Vec3, kNumKeypoints> keypoints{};
  std::vector<Vec3> vertices;
};

/// Deterministic farthest-point subset of the mesh vertices, starting from vertex 0.
std::vector<Vec3> model_points(const TriMesh& mesh, int max_points);

/// Largest pairwise distance between the points.
double diameter(std::span<const Vec3> points);

PoseErrors pose_errors(const HandGeometry& pred_hand, const HandGeometry& gt_hand, const RigidPose& pred_object,
                       const RigidPose& gt_object, const TriMesh& object_mesh, const SymmetrySpec& symmetry,
                       const CameraIntrinsics& camera, const MetricsConfig& cfg = {});

struct ContactReport {
  bool contact = false;
  double penetration = 0.0;   ///< meters, max(0, -min d)
  double min_distance = 0.0;  ///< meters, over hand vertices
};

/// Signed distances of the hand vertices to the posed object.
ContactReport contact_and_penetration(const TriMesh& hand, const MeshSdf& object, const RigidPose& object_pose,
                                      double threshold = 0.002);

/// Lowest L_force + 30 L_torque seen during a pseudo-force solve; |G|^2 when
/// every anchor starts frozen (the object would fall freely).
double stability_proxy(const HandModel& model, const HandPose& pose, const MeshSdf& object,
                       const RigidPose& object_pose, const Gravity& gravity, const SolverConfig& cfg = {});

struct PhysicsMetrics {
  double cp = 0.0;           ///< percent of samples in contact
  double pd = 0.0;           ///< mm
  double equilibrium = 0.0;  ///< stability proxy
};

struct MetricsRow {
  std::string name;
  PoseErrors pose;
  PhysicsMetrics physics;
};

/// Mean over rows; CP becomes the percentage of rows in contact.
MetricsRow average(std::span<const MetricsRow> rows, const std::string& name = "mean");

nlohmann::json to_json(const PoseErrors& e);
nlohmann::json to_json(const PhysicsMetrics& p);

/// Header plus one line per row, columns MJE, PA-MJE, OCE, MCE, SMCE, ADD,
/// ADD-S, REP, CP, PD.
void write_csv(std::ostream& out, std::span<const MetricsRow> rows);

}  // namespace graspforge

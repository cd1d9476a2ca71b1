#pragma once

#include "graspforge/force.hpp"
#include "graspforge/geom.hpp"
#include "graspforge/hand.hpp"
#include "graspforge/mesh.hpp"
#include "graspforge/metrics.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace graspforge {

inline constexpr const char* kScenarioSchema = "scenario.v1";

/// One synthetic hand-object frame. Everything lives in the camera frame
/// (x right, y down, z forward), so there is no separate extrinsic.
struct Scenario {
  std::string name;
  std::string template_id;
  std::uint64_t seed = 0;
  PrimitiveSpec object;
  RigidPose object_pose;
  SymmetrySpec symmetry;
  HandShape shape{};
  HandPose hand_pose;
  Gravity gravity;
  CameraIntrinsics camera;

  TriMesh object_mesh() const { return make_primitive(object); }

  nlohmann::json to_json() const;
  /// Rejects unknown fields and missing ones (SchemaError naming the field)
  /// and other schema versions (VersionError).
  static Scenario from_json(const nlohmann::json& j);
  bool operator==(const Scenario& other) const { return to_json() == other.to_json(); }
};

Scenario load_scenario(const std::filesystem::path& path);
void save_scenario(const Scenario& s, const std::filesystem::path& path);

/// Tweaks for build_canonical. jitter = false keeps the base placement
/// (object centre straight ahead at `depth`, no yaw).
struct TemplateOverrides {
  bool jitter = true;
  double depth = 0.45;
};

const std::vector<std::string>& template_names();

/// Deterministic scenario for a grasp template:
///   pinch-sphere, tripod-sphere, wrap-cylinder, palm-box, hover-no-contact.
/// The seed draws a yaw about the gravity axis and a small translation.
/// Throws UnknownTemplate.
Scenario build_canonical(const std::string& template_id, std::uint64_t seed = 0,
                         const TemplateOverrides& overrides = {});

}  // namespace graspforge

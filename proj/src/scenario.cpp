#include "graspforge/scenario.hpp"

#include "graspforge/error.hpp"
#include "json_util.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace graspforge {

using detail::expect_object;
using detail::mat3_json;
using detail::read;
using detail::read_mat3;
using detail::read_vec3;
using detail::vec3_json;

nlohmann::json Scenario::to_json() const {
  nlohmann::json theta = nlohmann::json::array();
  for (const auto& t : hand_pose.theta) theta.push_back(vec3_json(t.v));
  return {{"schema", kScenarioSchema},
          {"name", name},
          {"template", template_id},
          {"seed", seed},
          {"object", {{"kind", to_string(object.kind)}, {"dimensions", object.dimensions}, {"level", object.level}}},
          {"object_pose", {{"rotation", mat3_json(object_pose.rotation)}, {"translation", vec3_json(object_pose.translation)}}},
          {"symmetry", symmetry.to_json()},
          {"hand", {{"shape", shape}, {"theta", theta}, {"translation", vec3_json(hand_pose.translation)}}},
          {"gravity", {{"direction", vec3_json(gravity.direction)}, {"magnitude", gravity.magnitude}}},
          {"camera",
           {{"fx", camera.fx},
            {"fy", camera.fy},
            {"cx", camera.cx},
            {"cy", camera.cy},
            {"width", camera.width},
            {"height", camera.height}}}};
}

Scenario Scenario::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw SchemaError("scenario must be a JSON object");
  detail::check_schema(j, kScenarioSchema);
  expect_object(j, "", {"schema", "name", "template", "seed", "object", "object_pose", "symmetry", "hand", "gravity",
                        "camera", "config", "config_hash"});
  Scenario s;
  s.name = read<std::string>(j, "", "name");
  s.template_id = read<std::string>(j, "", "template");
  s.seed = read<std::uint64_t>(j, "", "seed");

  const auto& o = detail::field(j, "", "object");
  expect_object(o, "object", {"kind", "dimensions", "level"});
  try {
    s.object.kind = primitive_kind_from_string(read<std::string>(o, "object", "kind"));
  } catch (const InvalidParameter& e) {
    throw SchemaError(std::string("object.kind: ") + e.what());
  }
  s.object.dimensions = read<std::vector<double>>(o, "object", "dimensions");
  s.object.level = read<int>(o, "object", "level");

  const auto& p = detail::field(j, "", "object_pose");
  expect_object(p, "object_pose", {"rotation", "translation"});
  s.object_pose.rotation = read_mat3(p, "object_pose", "rotation");
  s.object_pose.translation = read_vec3(p, "object_pose", "translation");

  s.symmetry = SymmetrySpec::from_json(detail::field(j, "", "symmetry"));

  const auto& h = detail::field(j, "", "hand");
  expect_object(h, "hand", {"shape", "theta", "translation"});
  const auto shape = read<std::vector<double>>(h, "hand", "shape");
  if (shape.size() != kShapeDims) throw SchemaError("field 'hand.shape' must have 10 entries");
  std::copy(shape.begin(), shape.end(), s.shape.begin());
  const auto& theta = detail::field(h, "hand", "theta");
  if (!theta.is_array() || theta.size() != kNumJoints) throw SchemaError("field 'hand.theta' must have 16 entries");
  for (int k = 0; k < kNumJoints; ++k) {
    const nlohmann::json wrapper{{"v", theta[k]}};
    s.hand_pose.theta[k] = RotationAA(read_vec3(wrapper, "hand.theta", "v"));
  }
  s.hand_pose.translation = read_vec3(h, "hand", "translation");

  const auto& g = detail::field(j, "", "gravity");
  expect_object(g, "gravity", {"direction", "magnitude"});
  s.gravity.direction = read_vec3(g, "gravity", "direction");
  s.gravity.magnitude = read<double>(g, "gravity", "magnitude");

  const auto& c = detail::field(j, "", "camera");
  expect_object(c, "camera", {"fx", "fy", "cx", "cy", "width", "height"});
  s.camera.fx = read<double>(c, "camera", "fx");
  s.camera.fy = read<double>(c, "camera", "fy");
  s.camera.cx = read<double>(c, "camera", "cx");
  s.camera.cy = read<double>(c, "camera", "cy");
  s.camera.width = read<int>(c, "camera", "width");
  s.camera.height = read<int>(c, "camera", "height");
  s.camera.validate();
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open scenario '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return Scenario::from_json(j);
}

void save_scenario(const Scenario& s, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write scenario '" + path.string() + "'");
  out << s.to_json().dump(2) << '\n';
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

namespace {

// Thumb flexion axis in the hand frame: thumb direction crossed with its pad normal.
Vec3 thumb_axis() { return Vec3(0.752, -0.564, 0.28).normalized(); }

struct Design {
  PrimitiveSpec object;
  Mat3 object_rotation = Mat3::Identity();  ///< object frame -> hand frame
  Vec3 object_center = Vec3::Zero();        ///< hand frame
  HandPose pose;                            ///< root rotation and translation unset
  Mat3 placement = Mat3::Identity();        ///< hand frame -> camera frame before yaw
};

void curl(HandPose& p, int finger, double a, double b, double c) {
  const int r = finger_root(finger);
  p.theta[r] = RotationAA(Vec3(a, 0, 0));
  p.theta[r + 1] = RotationAA(Vec3(b, 0, 0));
  p.theta[r + 2] = RotationAA(Vec3(c, 0, 0));
}

void thumb(HandPose& p, const Vec3& cmc, double mcp, double ip) {
  p.theta[joint::kThumbMcp] = RotationAA(cmc);
  p.theta[joint::kThumbMcp + 1] = RotationAA(thumb_axis() * mcp);
  p.theta[joint::kThumbMcp + 2] = RotationAA(thumb_axis() * ip);
}

Mat3 columns(const Vec3& x, const Vec3& y, const Vec3& z) {
  Mat3 m;
  m << x, y, z;
  return m;
}

// Placements keep the root rotation well below pi: axis-angle averaging of
// candidates breaks down near the double cover.

// Back of the hand toward the camera, fingers pointing to image left.
Mat3 sideways() { return columns(Vec3::UnitY(), -Vec3::UnitX(), Vec3::UnitZ()); }

// Palm up and tilted 0.6 rad toward the camera, fingers pointing to image left.
Mat3 palm_up() {
  return aa_to_matrix(RotationAA(Vec3(0, M_PI, 0))) * aa_to_matrix(RotationAA(Vec3(0.6, 0, 0))) *
         columns(-Vec3::UnitZ(), Vec3::UnitX(), -Vec3::UnitY());
}

Design design(const std::string& id) {
  Design d;
  if (id == "pinch-sphere" || id == "hover-no-contact" || id == "tripod-sphere") {
    for (int f : {1, 2, 3}) curl(d.pose, f, 1.3, 1.5, 0.9);
    d.placement = sideways();
  }
  if (id == "pinch-sphere") {
    curl(d.pose, 0, 0.9655, 0.4271, 0.0008);
    thumb(d.pose, Vec3(-0.4008, -2.195, -1.2624), -0.1026, -0.1097);
    // sphere squeezed between the index and thumb distal pads, 0.5 mm deep
    const HandModel model;
    const auto anchors = anchor_states(skin_mesh(d.pose, model), model.anchors());
    const Vec3 a = anchors[2].position, b = anchors[18].position;
    d.object = {PrimitiveKind::Sphere, {0.5 * (a - b).norm() - 0.0005}, 3};
    d.object_center = 0.5 * (a + b);
  } else if (id == "tripod-sphere") {
    // index and middle spread apart so the three pads sit roughly 120 degrees apart
    d.pose.theta[1] = RotationAA(Vec3(0.97810977, -0.39609466, -0.69879928));
    d.pose.theta[2] = RotationAA(Vec3(0.3741, 0, 0));
    d.pose.theta[3] = RotationAA(Vec3(-0.0009, 0, 0));
    d.pose.theta[4] = RotationAA(Vec3(0.969321, 0.43514744, 0.76568286));
    d.pose.theta[5] = RotationAA(Vec3(0.4946, 0, 0));
    d.pose.theta[6] = RotationAA(Vec3(0.116, 0, 0));
    thumb(d.pose, Vec3(-0.2745, -2.279, -1.2451), -0.092, -0.1774);
    d.object = {PrimitiveKind::Sphere, {0.0271}, 3};
    d.object_center = Vec3(0.0146, 0.0896, 0.0743);
  } else if (id == "wrap-cylinder") {
    curl(d.pose, 0, 1.2067, 0.9991, 0.7289);
    curl(d.pose, 1, 1.2896, 1.1971, 0.6474);
    curl(d.pose, 2, 0.8053, 0.7688, 0.6525);
    curl(d.pose, 3, 1.1399, 1.177, 0.6296);
    // long axis across the fingers, shifted toward the thumb side
    d.object = {PrimitiveKind::Cylinder, {0.02, 0.12}, 3};
    d.object_rotation = columns(Vec3::UnitY(), Vec3::UnitZ(), Vec3::UnitX());
    d.object_center = Vec3(0.01, 0.0749, 0.0334);
    d.placement = palm_up();
  } else if (id == "palm-box") {
    d.object = {PrimitiveKind::Box, {0.07, 0.06, 0.04}, 3};
    d.object_center = Vec3(-0.006, 0.04, 0.011 + 0.02 - 0.0005);
    d.placement = palm_up();
  } else if (id == "hover-no-contact") {
    for (int f : {1, 2, 3}) curl(d.pose, f, 0.0, 0.0, 0.0);
    d.object = {PrimitiveKind::Sphere, {0.03}, 3};
    d.object_center = Vec3(-0.005, 0.09, 0.011 + 0.12 + 0.03);
  } else {
    throw UnknownTemplate("'" + id + "'");
  }
  return d;
}

}  // namespace

const std::vector<std::string>& template_names() {
  static const std::vector<std::string> names{"pinch-sphere", "tripod-sphere", "wrap-cylinder", "palm-box",
                                              "hover-no-contact"};
  return names;
}

Scenario build_canonical(const std::string& template_id, std::uint64_t seed, const TemplateOverrides& overrides) {
  const Design d = design(template_id);
  double yaw = 0.0;
  Vec3 offset = Vec3::Zero();
  if (overrides.jitter) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    yaw = 0.3 * unit(rng);
    offset = Vec3(0.02 * unit(rng), 0.015 * unit(rng), 0.03 * unit(rng));
  }
  const Mat3 rotation = aa_to_matrix(RotationAA(Vec3(0, yaw, 0))) * d.placement;
  const Vec3 target = Vec3(0, 0, overrides.depth) + offset;

  Scenario s;
  s.name = template_id + "-" + std::to_string(seed);
  s.template_id = template_id;
  s.seed = seed;
  s.object = d.object;
  s.symmetry = SymmetrySpec::for_primitive(d.object);
  s.object_pose.rotation = rotation * d.object_rotation;
  s.object_pose.translation = target;
  s.hand_pose = d.pose;
  s.hand_pose.theta[0] = matrix_to_aa(rotation);
  s.hand_pose.translation = target - rotation * d.object_center;
  return s;
}

}  // namespace graspforge

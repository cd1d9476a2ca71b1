#include "graspforge/hand.hpp"

#include "graspforge/error.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <tuple>

namespace graspforge {

// Generated at configure time from assets/hand_model_v1.json.
extern const char* const kBuiltinHandAsset;

namespace {

Vec3 vec3_from_json(const nlohmann::json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) throw SchemaError(std::string(what) + " must be a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

nlohmann::json vec3_to_json(const Vec3& v) { return nlohmann::json::array({v.x(), v.y(), v.z()}); }

double point_segment_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 ab = b - a;
  const double len2 = ab.squaredNorm();
  const double t = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  return (p - (a + t * ab)).norm();
}

}  // namespace

// ---------------------------------------------------------------------------
// hierarchy

int JointHierarchy::level_of(int j) const {
  for (int l = 0; l < 4; ++l)
    if (std::find(levels[l].begin(), levels[l].end(), j) != levels[l].end()) return l + 1;
  throw OutOfRange("joint " + std::to_string(j));
}

const JointHierarchy& joint_hierarchy() {
  static const JointHierarchy h = [] {
    JointHierarchy out;
    out.parent[0] = -1;
    out.levels[0] = {joint::kWrist};
    for (int f = 0; f < kNumFingers; ++f) {
      const int root = finger_root(f);
      out.levels[1].push_back(root);
      out.levels[2].push_back(root + 1);
      out.levels[3].push_back(root + 2);
      out.parent[root] = joint::kWrist;
      out.parent[root + 1] = root;
      out.parent[root + 2] = root + 1;
      out.children[root] = {root + 1, root + 2, finger_tip(f)};
      out.children[root + 1] = {root + 2, finger_tip(f)};
      out.children[root + 2] = {finger_tip(f)};
    }
    for (int k = 1; k < kNumKeypoints; ++k) out.children[joint::kWrist].push_back(k);
    return out;
  }();
  return h;
}

// ---------------------------------------------------------------------------
// asset

HandAsset HandAsset::from_json(const nlohmann::json& j) {
  HandAsset a;
  try {
    a.schema = j.at("schema").get<std::string>();
    if (a.schema != "hand-model.v1") throw VersionError("unsupported hand asset '" + a.schema + "'");
    const auto& kps = j.at("keypoints");
    if (kps.size() != kNumKeypoints) throw SchemaError("hand asset needs 21 keypoints");
    for (int k = 0; k < kNumKeypoints; ++k) {
      a.rest[k] = vec3_from_json(kps[k].at("position"), "keypoint position");
      a.parent[k] = kps[k].at("parent").get<int>();
      if (k > 0 && (a.parent[k] < 0 || a.parent[k] >= kNumJoints || a.parent[k] >= k))
        throw SchemaError("keypoint " + std::to_string(k) + " has an invalid parent");
    }
    const auto& fingers = j.at("fingers");
    if (fingers.size() != kNumFingers) throw SchemaError("hand asset needs 5 fingers");
    for (int f = 0; f < kNumFingers; ++f) {
      auto& out = a.fingers[f];
      out.name = fingers[f].at("name").get<std::string>();
      out.joints = fingers[f].at("joints").get<std::array<int, 3>>();
      out.tip = fingers[f].at("tip").get<int>();
      out.radius = fingers[f].at("radius").get<double>();
      out.pad_direction = vec3_from_json(fingers[f].at("pad_direction"), "pad_direction").normalized();
    }
    const auto& palm = j.at("palm");
    a.palm_min = vec3_from_json(palm.at("min"), "palm.min");
    a.palm_max = vec3_from_json(palm.at("max"), "palm.max");
    a.palm_grid = palm.at("grid").get<std::array<int, 3>>();
    const auto& mesh = j.at("mesh");
    a.ring_segments = mesh.at("ring_segments").get<int>();
    a.rings_per_bone = mesh.at("rings_per_bone").get<int>();
    a.cap_rings = mesh.at("cap_rings").get<int>();
    a.weight_power = mesh.at("weight_power").get<double>();
    if (j.contains("anchors")) {
      for (const auto& an : j.at("anchors")) {
        Anchor anchor;
        anchor.name = an.at("name").get<std::string>();
        anchor.face = an.at("face").get<int>();
        anchor.barycentric = an.at("barycentric").get<std::array<double, 3>>();
        a.anchors.push_back(std::move(anchor));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("hand asset: ") + e.what());
  }
  return a;
}

nlohmann::json HandAsset::to_json() const {
  nlohmann::json j;
  j["schema"] = schema;
  static const std::array<const char*, kNumKeypoints> names = {
      "wrist",     "index_mcp", "index_pip",  "index_dip", "middle_mcp", "middle_pip", "middle_dip",
      "pinky_mcp", "pinky_pip", "pinky_dip",  "ring_mcp",  "ring_pip",   "ring_dip",   "thumb_cmc",
      "thumb_mcp", "thumb_ip",  "index_tip",  "middle_tip", "pinky_tip", "ring_tip",   "thumb_tip"};
  auto& kps = j["keypoints"] = nlohmann::json::array();
  for (int k = 0; k < kNumKeypoints; ++k)
    kps.push_back({{"name", names[k]}, {"parent", k == 0 ? -1 : parent[k]}, {"position", vec3_to_json(rest[k])}});
  auto& fs = j["fingers"] = nlohmann::json::array();
  for (const auto& f : fingers)
    fs.push_back({{"name", f.name},
                  {"joints", f.joints},
                  {"tip", f.tip},
                  {"radius", f.radius},
                  {"pad_direction", vec3_to_json(f.pad_direction)}});
  j["palm"] = {{"min", vec3_to_json(palm_min)}, {"max", vec3_to_json(palm_max)}, {"grid", palm_grid}};
  j["mesh"] = {{"ring_segments", ring_segments},
               {"rings_per_bone", rings_per_bone},
               {"cap_rings", cap_rings},
               {"weight_power", weight_power}};
  auto& an = j["anchors"] = nlohmann::json::array();
  for (const auto& a : anchors)
    an.push_back({{"name", a.name}, {"face", a.face}, {"barycentric", a.barycentric}});
  return j;
}

const HandAsset& HandAsset::builtin() {
  static const HandAsset asset = from_json(nlohmann::json::parse(kBuiltinHandAsset));
  return asset;
}

// ---------------------------------------------------------------------------
// model

void HandModel::build_mesh(const HandAsset& asset, const std::array<Vec3, kNumKeypoints>& rest,
                           double scale, TriMesh& mesh, std::vector<Influence>& weights) {
  std::vector<Vec3> verts;
  std::vector<Face> faces;
  weights.clear();

  // Palm block: subdivided box surface, rigidly bound to the wrist.
  {
    const Vec3 wrist = rest[joint::kWrist];
    const Vec3 lo = wrist + scale * (asset.palm_min - wrist);
    const Vec3 hi = wrist + scale * (asset.palm_max - wrist);
    const auto [nx, ny, nz] = asset.palm_grid;
    std::map<std::tuple<int, int, int>, int> lattice;
    auto vid = [&](int i, int j, int k) {
      const auto key = std::make_tuple(i, j, k);
      if (auto it = lattice.find(key); it != lattice.end()) return it->second;
      const Vec3 t(static_cast<double>(i) / nx, static_cast<double>(j) / ny, static_cast<double>(k) / nz);
      verts.push_back(lo + (hi - lo).cwiseProduct(t));
      weights.push_back(Influence{});
      lattice.emplace(key, static_cast<int>(verts.size()) - 1);
      return static_cast<int>(verts.size()) - 1;
    };
    const Vec3 center = 0.5 * (lo + hi);
    auto quad = [&](int a, int b, int c, int d) {
      for (Face f : {Face{a, b, c}, Face{a, c, d}}) {
        const Vec3 n = (verts[f[1]] - verts[f[0]]).cross(verts[f[2]] - verts[f[0]]);
        const Vec3 mid = (verts[f[0]] + verts[f[1]] + verts[f[2]]) / 3.0;
        if (n.dot(mid - center) < 0.0) std::swap(f[1], f[2]);
        faces.push_back(f);
      }
    };
    const int dims[3] = {nx, ny, nz};
    for (int axis = 0; axis < 3; ++axis) {
      const int u = (axis + 1) % 3, v = (axis + 2) % 3;
      for (int side = 0; side < 2; ++side) {
        for (int a = 0; a < dims[u]; ++a)
          for (int b = 0; b < dims[v]; ++b) {
            int c[4][3];
            const int du[4] = {0, 1, 1, 0}, dv[4] = {0, 0, 1, 1};
            for (int q = 0; q < 4; ++q) {
              c[q][axis] = side * dims[axis];
              c[q][u] = a + du[q];
              c[q][v] = b + dv[q];
            }
            quad(vid(c[0][0], c[0][1], c[0][2]), vid(c[1][0], c[1][1], c[1][2]),
                 vid(c[2][0], c[2][1], c[2][2]), vid(c[3][0], c[3][1], c[3][2]));
          }
      }
    }
  }

  // Fingers: one closed tube per digit along MCP-PIP-DIP-tip with a rounded cap.
  const int m_seg = asset.ring_segments;
  for (const auto& finger : asset.fingers) {
    const std::array<Vec3, 4> q = {rest[finger.joints[0]], rest[finger.joints[1]],
                                   rest[finger.joints[2]], rest[finger.tip]};
    const Vec3 d = (q[3] - q[0]).normalized();
    const Vec3 e2 = (finger.pad_direction - finger.pad_direction.dot(d) * d).normalized();
    const Vec3 e1 = e2.cross(d);
    const double r = finger.radius * scale;

    struct Ring {
      Vec3 center;
      double radius;
    };
    std::vector<Ring> rings;
    for (int b = 0; b < 3; ++b)
      for (int k = 0; k < asset.rings_per_bone; ++k)
        rings.push_back({q[b] + (static_cast<double>(k) / asset.rings_per_bone) * (q[b + 1] - q[b]), r});
    rings.push_back({q[3], r});
    for (int m = 1; m <= asset.cap_rings; ++m) {
      const double alpha = 0.5 * std::numbers::pi * m / (asset.cap_rings + 1);
      rings.push_back({q[3] + r * std::sin(alpha) * d, r * std::cos(alpha)});
    }

    const std::array<std::pair<Vec3, Vec3>, 4> bones = {
        std::pair{q[0], q[1]}, std::pair{q[1], q[2]}, std::pair{q[2], q[3]},
        std::pair{rest[joint::kWrist], rest[joint::kMiddleMcp]}};
    const std::array<int, 4> bone_joint = {finger.joints[0], finger.joints[1], finger.joints[2],
                                           joint::kWrist};
    auto influence = [&](const Vec3& p) {
      std::array<double, 4> dist{};
      for (int b = 0; b < 4; ++b) dist[b] = point_segment_distance(p, bones[b].first, bones[b].second);
      std::array<int, 4> idx = {0, 1, 2, 3};
      std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return dist[a] < dist[b]; });
      Influence inf;
      inf.joint = {bone_joint[idx[0]], bone_joint[idx[1]]};
      if (dist[idx[0]] < 1e-12) {
        inf.weight = {1.0, 0.0};
        return inf;
      }
      const double w0 = std::pow(dist[idx[0]], -asset.weight_power);
      const double w1 = std::pow(dist[idx[1]], -asset.weight_power);
      inf.weight = {w0 / (w0 + w1), w1 / (w0 + w1)};
      return inf;
    };
    auto add_vertex = [&](const Vec3& p) {
      verts.push_back(p);
      weights.push_back(influence(p));
      return static_cast<int>(verts.size()) - 1;
    };

    const int base = add_vertex(q[0]);
    std::vector<int> first_ids;
    std::vector<std::vector<int>> ring_ids;
    for (const Ring& ring : rings) {
      std::vector<int> ids;
      for (int m = 0; m < m_seg; ++m) {
        const double phi = 2.0 * std::numbers::pi * (m + 0.5) / m_seg;
        ids.push_back(add_vertex(ring.center + ring.radius * (std::cos(phi) * e1 + std::sin(phi) * e2)));
      }
      ring_ids.push_back(std::move(ids));
    }
    const int apex = add_vertex(q[3] + r * d);

    for (int m = 0; m < m_seg; ++m) {
      const int m1 = (m + 1) % m_seg;
      faces.push_back({base, ring_ids[0][m1], ring_ids[0][m]});
      for (std::size_t k = 0; k + 1 < ring_ids.size(); ++k) {
        const int a = ring_ids[k][m], b = ring_ids[k][m1];
        const int c = ring_ids[k + 1][m], dd = ring_ids[k + 1][m1];
        faces.push_back({a, b, c});
        faces.push_back({b, dd, c});
      }
      faces.push_back({ring_ids.back()[m], ring_ids.back()[m1], apex});
    }
  }
  mesh = TriMesh(std::move(verts), std::move(faces));
}

HandModel::HandModel(const HandShape& beta, const HandAsset& asset) : beta_(beta) {
  for (double b : beta)
    if (!std::isfinite(b)) throw InvalidParameter("shape parameters must be finite");
  const double scale = 1.0 + 0.1 * std::tanh(beta[0]);
  std::array<double, kNumKeypoints> finger_mult{};
  finger_mult.fill(1.0);
  for (int f = 0; f < kNumFingers; ++f) {
    const double m = 1.0 + 0.1 * std::tanh(beta[1 + f]);
    finger_mult[asset.fingers[f].joints[1]] = m;
    finger_mult[asset.fingers[f].joints[2]] = m;
    finger_mult[asset.fingers[f].tip] = m;
  }
  rest_[0] = asset.rest[0];
  for (int k = 1; k < kNumKeypoints; ++k) {
    const int p = asset.parent[k];
    rest_[k] = rest_[p] + scale * finger_mult[k] * (asset.rest[k] - asset.rest[p]);
  }
  build_mesh(asset, rest_, scale, rest_mesh_, weights_);
  anchors_ = asset.anchors;
  for (const Anchor& a : anchors_)
    if (a.face < 0 || a.face >= static_cast<int>(rest_mesh_.faces.size()))
      throw SchemaError("anchor '" + a.name + "' references face " + std::to_string(a.face));
}

JointTransforms joint_transforms(const HandPose& pose, const HandModel& model) {
  const auto& rest = model.rest_keypoints();
  const auto& parent = joint_hierarchy().parent;
  JointTransforms t;
  t.rotation[0] = aa_to_matrix(pose.theta[0]);
  t.position[0] = pose.translation;
  for (int j = 1; j < kNumJoints; ++j) {
    const int p = parent[j];
    t.rotation[j] = t.rotation[p] * aa_to_matrix(pose.theta[j]);
    t.position[j] = t.position[p] + t.rotation[p] * (rest[j] - rest[p]);
  }
  return t;
}

std::array<Vec3, kNumKeypoints> forward_kinematics(const HandPose& pose, const HandModel& model) {
  const JointTransforms t = joint_transforms(pose, model);
  const auto& rest = model.rest_keypoints();
  std::array<Vec3, kNumKeypoints> out;
  for (int j = 0; j < kNumJoints; ++j) out[j] = t.position[j];
  for (int f = 0; f < kNumFingers; ++f) {
    const int dip = finger_root(f) + 2;
    out[finger_tip(f)] = t.position[dip] + t.rotation[dip] * (rest[finger_tip(f)] - rest[dip]);
  }
  return out;
}

TriMesh skin_mesh(const HandPose& pose, const HandModel& model) {
  const JointTransforms t = joint_transforms(pose, model);
  const auto& rest = model.rest_keypoints();
  const TriMesh& base = model.rest_mesh();
  const auto& weights = model.skin_weights();
  TriMesh out = base;
  for (std::size_t i = 0; i < base.vertices.size(); ++i) {
    const auto& inf = weights[i];
    Vec3 v = Vec3::Zero();
    for (int k = 0; k < 2; ++k) {
      if (inf.weight[k] == 0.0) continue;
      const int j = inf.joint[k];
      v += inf.weight[k] * (t.rotation[j] * (base.vertices[i] - rest[j]) + t.position[j]);
    }
    out.vertices[i] = v;
  }
  return out;
}

std::vector<AnchorState> anchor_states(const TriMesh& mesh, std::span<const Anchor> anchors) {
  std::vector<AnchorState> out;
  out.reserve(anchors.size());
  for (const Anchor& a : anchors) {
    if (a.face < 0 || a.face >= static_cast<int>(mesh.faces.size()))
      throw DimensionMismatch("anchor '" + a.name + "' face index out of range");
    const Face& f = mesh.faces[a.face];
    const Vec3& p1 = mesh.vertices[f[0]];
    const Vec3& p2 = mesh.vertices[f[1]];
    const Vec3& p3 = mesh.vertices[f[2]];
    const Vec3 normal = (p2 - p1).cross(p3 - p2);
    if (0.5 * normal.norm() < 1e-12) throw DegenerateTriangle("anchor '" + a.name + "'");
    AnchorState s;
    s.position = a.barycentric[0] * p1 + a.barycentric[1] * p2 + a.barycentric[2] * p3;
    const Vec3 x = (p2 - p1).normalized();
    const Vec3 z = normal.normalized();
    s.frame.col(0) = x;
    s.frame.col(1) = z.cross(x);
    s.frame.col(2) = z;
    out.push_back(s);
  }
  return out;
}

}  // namespace graspforge

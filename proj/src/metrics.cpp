#include "graspforge/metrics.hpp"

#include "graspforge/error.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>

namespace graspforge {

namespace {

bool is_rotation(const Mat3& m) {
  return (m.transpose() * m - Mat3::Identity()).norm() < 1e-9 && std::abs(m.determinant() - 1.0) < 1e-9;
}

nlohmann::json mat_json(const Mat3& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (int r = 0; r < 3; ++r) rows.push_back({m(r, 0), m(r, 1), m(r, 2)});
  return rows;
}

Mat3 mat_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw SchemaError("rotation must be a 3x3 array");
  Mat3 m;
  for (int r = 0; r < 3; ++r) {
    if (!j[r].is_array() || j[r].size() != 3) throw SchemaError("rotation must be a 3x3 array");
    for (int c = 0; c < 3; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

double mean_distance(std::span<const Vec3> a, std::span<const Vec3> b) {
  if (a.size() != b.size())
    throw DimensionMismatch(std::to_string(a.size()) + " vs " + std::to_string(b.size()) + " points");
  if (a.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += (a[i] - b[i]).norm();
  return sum / static_cast<double>(a.size());
}

std::array<Vec3, 8> corners(const Aabb& box) {
  std::array<Vec3, 8> c;
  for (int i = 0; i < 8; ++i)
    c[i] = Vec3(i & 1 ? box.max.x() : box.min.x(), i & 2 ? box.max.y() : box.min.y(),
                i & 4 ? box.max.z() : box.min.z());
  return c;
}

double corner_error(const std::array<Vec3, 8>& c, const Mat3& pred_r, const Vec3& pred_t, const RigidPose& gt) {
  double sum = 0.0;
  for (const auto& p : c) sum += ((pred_r * p + pred_t) - gt.apply(p)).norm();
  return sum / 8.0;
}

}  // namespace

void SymmetrySpec::validate() const {
  bool has_identity = false;
  for (const auto& r : rotations) {
    if (!is_rotation(r)) throw InvalidParameter("symmetry entry is not a rotation");
    if ((r - Mat3::Identity()).norm() < 1e-9) has_identity = true;
  }
  if (!has_identity) throw InvalidParameter("symmetry set must contain the identity");
  if (continuous) {
    if (continuous->axis.norm() < 1e-12) throw InvalidParameter("symmetry axis must be nonzero");
    if (continuous->samples < 1) throw InvalidParameter("symmetry axis needs at least one sample");
  }
}

std::vector<Mat3> SymmetrySpec::expanded() const {
  if (!continuous) return rotations;
  std::vector<Mat3> out;
  const Vec3 axis = continuous->axis.normalized();
  for (int k = 0; k < continuous->samples; ++k) {
    const Mat3 spin = aa_to_matrix(RotationAA(axis * (2.0 * std::numbers::pi * k / continuous->samples)));
    for (const auto& r : rotations) out.push_back(spin * r);
  }
  return out;
}

SymmetrySpec SymmetrySpec::for_primitive(const PrimitiveSpec& spec) {
  SymmetrySpec s;
  switch (spec.kind) {
    case PrimitiveKind::Sphere:
      s.full_rotation = true;
      break;
    case PrimitiveKind::Cylinder:
      s.rotations.push_back(Vec3(1, -1, -1).asDiagonal());
      s.continuous = ContinuousAxis{};
      break;
    case PrimitiveKind::Box: {
      const auto& d = spec.dimensions;
      std::array<int, 3> perm{0, 1, 2};
      do {
        for (int signs = 0; signs < 8; ++signs) {
          Mat3 m = Mat3::Zero();
          bool keeps = true;
          for (int r = 0; r < 3; ++r) {
            m(r, perm[r]) = (signs >> r) & 1 ? -1.0 : 1.0;
            if (d.size() == 3 && std::abs(d[r] - d[perm[r]]) > 1e-12 * std::max(d[r], d[perm[r]])) keeps = false;
          }
          if (keeps && m.determinant() > 0.0 && (m - Mat3::Identity()).norm() > 0.5) s.rotations.push_back(m);
        }
      } while (std::next_permutation(perm.begin(), perm.end()));
      break;
    }
  }
  return s;
}

nlohmann::json SymmetrySpec::to_json() const {
  nlohmann::json rots = nlohmann::json::array();
  for (const auto& r : rotations) rots.push_back(mat_json(r));
  nlohmann::json j{{"rotations", rots}, {"full_rotation", full_rotation}};
  if (continuous)
    j["continuous"] = {{"axis", {continuous->axis.x(), continuous->axis.y(), continuous->axis.z()}},
                       {"samples", continuous->samples}};
  else
    j["continuous"] = nullptr;
  return j;
}

SymmetrySpec SymmetrySpec::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw SchemaError("symmetry must be an object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (key != "rotations" && key != "full_rotation" && key != "continuous")
      throw SchemaError("unknown symmetry field '" + key + "'");
  }
  SymmetrySpec s;
  s.rotations.clear();
  try {
    if (!j.contains("rotations")) throw SchemaError("symmetry: missing field 'rotations'");
    for (const auto& r : j.at("rotations")) s.rotations.push_back(mat_from_json(r));
    s.full_rotation = j.value("full_rotation", false);
    if (j.contains("continuous") && !j.at("continuous").is_null()) {
      const auto& c = j.at("continuous");
      const auto a = c.at("axis");
      s.continuous = ContinuousAxis{Vec3(a.at(0).get<double>(), a.at(1).get<double>(), a.at(2).get<double>()),
                                    c.at("samples").get<int>()};
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("symmetry: ") + e.what());
  }
  s.validate();
  return s;
}

std::vector<Vec3> model_points(const TriMesh& mesh, int max_points) {
  const auto& v = mesh.vertices;
  if (v.empty()) throw EmptyMesh("no model points");
  if (max_points < 1) throw InvalidParameter("need at least one model point");
  if (static_cast<int>(v.size()) <= max_points) return v;
  std::vector<Vec3> out;
  out.reserve(static_cast<std::size_t>(max_points));
  std::vector<double> nearest(v.size(), std::numeric_limits<double>::infinity());
  std::size_t next = 0;
  for (int n = 0; n < max_points; ++n) {
    out.push_back(v[next]);
    std::size_t far = 0;
    double far_d = -1.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      nearest[i] = std::min(nearest[i], (v[i] - v[next]).squaredNorm());
      if (nearest[i] > far_d) {
        far_d = nearest[i];
        far = i;
      }
    }
    next = far;
  }
  return out;
}

double diameter(std::span<const Vec3> points) {
  double best = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i)
    for (std::size_t j = i + 1; j < points.size(); ++j) best = std::max(best, (points[i] - points[j]).squaredNorm());
  return std::sqrt(best);
}

PoseErrors pose_errors(const HandGeometry& pred_hand, const HandGeometry& gt_hand, const RigidPose& pred_object,
                       const RigidPose& gt_object, const TriMesh& object_mesh, const SymmetrySpec& symmetry,
                       const CameraIntrinsics& camera, const MetricsConfig& cfg) {
  constexpr double mm = 1000.0;
  PoseErrors e;
  e.mje = mm * mean_distance(pred_hand.keypoints, gt_hand.keypoints);
  if (e.mje == 0.0) {
    e.pa_mje = 0.0;
  } else {
    const Alignment a = procrustes_align(pred_hand.keypoints, gt_hand.keypoints, cfg.pa_mode);
    std::array<Vec3, kNumKeypoints> aligned;
    for (int k = 0; k < kNumKeypoints; ++k) aligned[k] = a.transform.apply(pred_hand.keypoints[k]);
    e.pa_mje = mm * mean_distance(aligned, gt_hand.keypoints);
  }
  e.mme = mm * mean_distance(pred_hand.vertices, gt_hand.vertices);

  const Aabb box = bounds(object_mesh);
  e.oce = mm * (pred_object.apply(box.center()) - gt_object.apply(box.center())).norm();
  const auto c = corners(box);
  e.mce = mm * corner_error(c, pred_object.rotation, pred_object.translation, gt_object);
  if (symmetry.full_rotation) {
    e.smce = mm * corner_error(c, gt_object.rotation, pred_object.translation, gt_object);
  } else {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& s : symmetry.expanded())
      best = std::min(best, corner_error(c, pred_object.rotation * s, pred_object.translation, gt_object));
    e.smce = mm * best;
  }
  e.smce = std::min(e.smce, e.mce);

  const std::vector<Vec3> pts = model_points(object_mesh, cfg.max_model_points);
  std::vector<Vec3> pred_pts(pts.size()), gt_pts(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    pred_pts[i] = pred_object.apply(pts[i]);
    gt_pts[i] = gt_object.apply(pts[i]);
  }
  const double add = mean_distance(pred_pts, gt_pts);
  double adds = 0.0;
  for (const auto& p : pred_pts) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& g : gt_pts) best = std::min(best, (p - g).squaredNorm());
    adds += std::sqrt(best);
  }
  adds /= static_cast<double>(pts.size());
  adds = std::min(adds, add);
  const double limit = cfg.add_fraction * diameter(pts);
  e.add = mm * add;
  e.adds = mm * adds;
  e.add_rate = add < limit ? 100.0 : 0.0;
  e.adds_rate = adds < limit ? 100.0 : 0.0;

  double rep = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i)
    rep += (project_pinhole(pred_pts[i], camera) - project_pinhole(gt_pts[i], camera)).norm();
  e.rep = rep / static_cast<double>(pts.size());
  return e;
}

ContactReport contact_and_penetration(const TriMesh& hand, const MeshSdf& object, const RigidPose& object_pose,
                                      double threshold) {
  if (hand.vertices.empty()) throw EmptyMesh("hand mesh has no vertices");
  ContactReport r;
  r.min_distance = std::numeric_limits<double>::infinity();
  for (const auto& v : hand.vertices)
    r.min_distance = std::min(r.min_distance, object.query(object_pose.apply_inverse(v)).distance);
  r.penetration = std::max(0.0, -r.min_distance);
  r.contact = r.min_distance < threshold;
  return r;
}

double stability_proxy(const HandModel& model, const HandPose& pose, const MeshSdf& object,
                       const RigidPose& object_pose, const Gravity& gravity, const SolverConfig& cfg) {
  try {
    return solve_pseudo_forces(model, pose, object, object_pose, gravity, cfg).min_equilibrium;
  } catch (const AllAnchorsFrozen&) {
    return gravity.vector().squaredNorm();
  }
}

MetricsRow average(std::span<const MetricsRow> rows, const std::string& name) {
  MetricsRow m;
  m.name = name;
  if (rows.empty()) return m;
  m.pose.add_rate = m.pose.adds_rate = 0.0;
  for (const auto& r : rows) {
    m.pose.mje += r.pose.mje;
    m.pose.pa_mje += r.pose.pa_mje;
    m.pose.mme += r.pose.mme;
    m.pose.oce += r.pose.oce;
    m.pose.mce += r.pose.mce;
    m.pose.smce += r.pose.smce;
    m.pose.add += r.pose.add;
    m.pose.adds += r.pose.adds;
    m.pose.add_rate += r.pose.add_rate;
    m.pose.adds_rate += r.pose.adds_rate;
    m.pose.rep += r.pose.rep;
    m.physics.cp += r.physics.cp;
    m.physics.pd += r.physics.pd;
    m.physics.equilibrium += r.physics.equilibrium;
  }
  const double n = static_cast<double>(rows.size());
  for (double* f : {&m.pose.mje, &m.pose.pa_mje, &m.pose.mme, &m.pose.oce, &m.pose.mce, &m.pose.smce, &m.pose.add,
                    &m.pose.adds, &m.pose.add_rate, &m.pose.adds_rate, &m.pose.rep, &m.physics.cp, &m.physics.pd,
                    &m.physics.equilibrium})
    *f /= n;
  return m;
}

nlohmann::json to_json(const PoseErrors& e) {
  return {{"mje_mm", e.mje},     {"pa_mje_mm", e.pa_mje}, {"mme_mm", e.mme},   {"oce_mm", e.oce},
          {"mce_mm", e.mce},     {"smce_mm", e.smce},     {"add_mm", e.add},   {"adds_mm", e.adds},
          {"add_0.1d_pct", e.add_rate}, {"adds_0.1d_pct", e.adds_rate}, {"rep_px", e.rep}};
}

nlohmann::json to_json(const PhysicsMetrics& p) {
  return {{"cp_pct", p.cp}, {"pd_mm", p.pd}, {"equilibrium", p.equilibrium}};
}

void write_csv(std::ostream& out, std::span<const MetricsRow> rows) {
  out << "name,MJE,PA-MJE,OCE,MCE,SMCE,ADD,ADD-S,REP,CP,PD\n";
  out << std::setprecision(10);
  for (const auto& r : rows)
    out << r.name << ',' << r.pose.mje << ',' << r.pose.pa_mje << ',' << r.pose.oce << ',' << r.pose.mce << ','
        << r.pose.smce << ',' << r.pose.add << ',' << r.pose.adds << ',' << r.pose.rep << ',' << r.physics.cp << ','
        << r.physics.pd << '\n';
}

}  // namespace graspforge

#include "graspforge/aggregate.hpp"

#include "graspforge/error.hpp"
#include "graspforge/parallel.hpp"
#include "graspforge/physics.hpp"
#include "json_util.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace graspforge {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

nlohmann::json score_json(double s) { return std::isfinite(s) ? nlohmann::json(s) : nlohmann::json(); }

nlohmann::json scores_json(std::span<const double> s) {
  nlohmann::json out = nlohmann::json::array();
  for (double v : s) out.push_back(score_json(v));
  return out;
}

}  // namespace

SolverConfig AggregationConfig::reduced_solver() {
  SolverConfig s;
  s.phase1_steps = 300;
  s.phase2_steps = 0;
  return s;
}

void AggregationConfig::validate() const {
  if (hand_k < 1 || object_t_k < 1 || object_r_k < 1 || hand_phys_k < 1 || object_phys_k < 1)
    throw InvalidParameter("every top-K size must be positive");
  hand_solver.validate();
  object_solver.validate();
}

nlohmann::json AggregationConfig::to_json() const {
  return {{"hand_k", hand_k},
          {"object_t_k", object_t_k},
          {"object_r_k", object_r_k},
          {"hand_phys_k", hand_phys_k},
          {"object_phys_k", object_phys_k},
          {"physics", physics},
          {"hand_solver", hand_solver.to_json()},
          {"object_solver", object_solver.to_json()}};
}

AggregationConfig AggregationConfig::from_json(const nlohmann::json& j) {
  detail::expect_object(j, "aggregation", {"hand_k", "object_t_k", "object_r_k", "hand_phys_k", "object_phys_k",
                                           "physics", "hand_solver", "object_solver"});
  AggregationConfig c;
  const auto opt_int = [&](const char* key, int& out) {
    if (j.contains(key)) out = detail::read<int>(j, "aggregation", key);
  };
  opt_int("hand_k", c.hand_k);
  opt_int("object_t_k", c.object_t_k);
  opt_int("object_r_k", c.object_r_k);
  opt_int("hand_phys_k", c.hand_phys_k);
  opt_int("object_phys_k", c.object_phys_k);
  if (j.contains("physics")) c.physics = detail::read<bool>(j, "aggregation", "physics");
  // partial solver blocks override the matching defaults
  if (j.contains("hand_solver")) {
    auto merged = c.hand_solver.to_json();
    merged.update(j["hand_solver"]);
    c.hand_solver = SolverConfig::from_json(merged);
  }
  if (j.contains("object_solver")) {
    auto merged = c.object_solver.to_json();
    merged.update(j["object_solver"]);
    c.object_solver = SolverConfig::from_json(merged);
  }
  c.validate();
  return c;
}

std::vector<int> top_k(std::span<const double> scores, int k) {
  const int n = static_cast<int>(scores.size());
  k = std::clamp(k, 0, n);
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  const auto better = [&](int a, int b) {
    const double sa = scores[a], sb = scores[b];
    const bool na = std::isnan(sa), nb = std::isnan(sb);
    if (na != nb) return nb;
    if (!na && sa != sb) return sa > sb;
    return a < b;
  };
  std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), better);
  idx.resize(static_cast<std::size_t>(k));
  return idx;
}

std::array<double, kNumKeypoints> keypoint_responses(std::span<const Vec3> keypoints, const HeatmapStack& heatmaps,
                                                     const CameraIntrinsics& camera) {
  if (keypoints.size() != kNumKeypoints) throw DimensionMismatch("expected 21 hand keypoints");
  if (heatmaps.channels != kNumKeypoints)
    throw BadChannel("hand heatmaps need 21 channels, got " + std::to_string(heatmaps.channels));
  std::array<double, kNumKeypoints> out{};
  for (int c = 0; c < kNumKeypoints; ++c) {
    if (keypoints[c].z() <= 1e-6) continue;  // behind the camera contributes 0
    out[c] = sample_bilinear(heatmaps, c, to_heatmap(project_pinhole(keypoints[c], camera), heatmaps));
  }
  return out;
}

namespace {

double children_sum(const std::array<double, kNumKeypoints>& responses, int joint) {
  double s = 0.0;
  for (int c : joint_hierarchy().children[joint]) s += responses[c];
  return s;
}

}  // namespace

double visual_score_hand(const HandPose& pose, int joint, const HeatmapStack& heatmaps,
                         const CameraIntrinsics& camera, const HandModel& model) {
  if (joint < 0 || joint >= kNumJoints) throw InvalidParameter("joint index out of range");
  const auto kp = forward_kinematics(pose, model);
  return children_sum(keypoint_responses(kp, heatmaps, camera), joint);
}

RotationAA weighted_mean(std::span<const RotationAA> values, std::span<const double> weights, bool* fallback) {
  if (values.empty() || values.size() != weights.size())
    throw DimensionMismatch("weighted mean needs one weight per value");
  double total = 0.0;
  for (double w : weights) total += w;
  const bool uniform = !(total > 0.0) || !std::isfinite(total);
  if (fallback) *fallback = uniform;
  Vec3 sum = Vec3::Zero();
  for (std::size_t i = 0; i < values.size(); ++i) sum += (uniform ? 1.0 : weights[i]) * canonical(values[i]).v;
  return RotationAA(sum / (uniform ? static_cast<double>(values.size()) : total));
}

std::vector<JointSelection> aggregate_hand_level(std::vector<HandPose>& candidates, int level,
                                                 const std::array<std::vector<double>, kNumJoints>& scores, int k) {
  if (level < 0 || level > 3) throw InvalidParameter("hand levels are 0..3");
  if (candidates.empty()) throw InvalidParameter("no hand candidates");
  std::vector<JointSelection> out;
  for (int j : joint_hierarchy().levels[level]) {
    if (scores[j].size() != candidates.size()) throw DimensionMismatch("one score per candidate is required");
    JointSelection sel;
    sel.joint = j;
    sel.selected = top_k(scores[j], k);
    std::vector<RotationAA> values;
    for (int i : sel.selected) {
      values.push_back(candidates[i].theta[j]);
      sel.scores.push_back(scores[j][i]);
    }
    sel.value = weighted_mean(values, sel.scores, &sel.fallback);
    out.push_back(std::move(sel));
  }
  for (const auto& sel : out)
    for (auto& c : candidates) c.theta[sel.joint] = sel.value;
  return out;
}

HandVisualResult visual_aggregate_hand(std::vector<HandPose> candidates, const HeatmapStack& heatmaps,
                                       const CameraIntrinsics& camera, const HandModel& model,
                                       const AggregationConfig& cfg, std::array<int, 4> order) {
  if (candidates.empty()) throw InvalidParameter("no hand candidates");
  if (heatmaps.channels != kNumKeypoints)
    throw BadChannel("hand heatmaps need 21 channels, got " + std::to_string(heatmaps.channels));
  const auto& h = joint_hierarchy();
  HandVisualResult result;
  std::vector<std::array<double, kNumKeypoints>> responses(candidates.size());
  for (std::size_t step = 0; step < order.size(); ++step) {
    const int level = order[step];
    parallel_for(candidates.size(), cfg.threads, [&](std::size_t i) {
      responses[i] = keypoint_responses(forward_kinematics(candidates[i], model), heatmaps, camera);
    });
    std::array<std::vector<double>, kNumJoints> scores;
    for (int j : h.levels[level]) {
      scores[j].resize(candidates.size());
      for (std::size_t i = 0; i < candidates.size(); ++i) scores[j][i] = children_sum(responses[i], j);
    }
    if (step + 1 == order.size()) {
      std::vector<double> summed(candidates.size(), 0.0);
      for (int j : h.levels[level])
        for (std::size_t i = 0; i < candidates.size(); ++i) summed[i] += scores[j][i];
      result.k4 = top_k(summed, cfg.hand_k);
      for (int i : result.k4) result.k4_scores.push_back(summed[i]);
      result.before_last = candidates;
    }
    result.levels.push_back(aggregate_hand_level(candidates, level, scores, cfg.hand_k));
  }
  result.pose = candidates.front();
  return result;
}

double visual_score_object(const RigidPose& pose, const HeatmapStack& heatmaps, const CameraIntrinsics& camera,
                           const ObjectKeypoints27& keypoints) {
  if (heatmaps.channels != 27) throw BadChannel("object heatmaps need 27 channels, got " + std::to_string(heatmaps.channels));
  double s = 0.0;
  for (int c = 0; c < 27; ++c) {
    const Vec3 p = pose.apply(keypoints[c]);
    if (p.z() <= 1e-6) continue;
    s += sample_bilinear(heatmaps, c, to_heatmap(project_pinhole(p, camera), heatmaps));
  }
  return s;
}

ObjectVisualResult visual_aggregate_object(const std::vector<RigidPose>& candidates, const HeatmapStack& heatmaps,
                                           const CameraIntrinsics& camera, const ObjectKeypoints27& keypoints,
                                           const AggregationConfig& cfg) {
  if (candidates.empty()) throw InvalidParameter("no object candidates");
  ObjectVisualResult r;
  std::vector<double> scores(candidates.size());
  parallel_for(candidates.size(), cfg.threads,
               [&](std::size_t i) { scores[i] = visual_score_object(candidates[i], heatmaps, camera, keypoints); });
  r.k_t = top_k(scores, cfg.object_t_k);
  double total = 0.0;
  for (int i : r.k_t) {
    r.t_scores.push_back(scores[i]);
    r.translations.push_back(candidates[i].translation);
    total += scores[i];
  }
  r.fallback_t = !(total > 0.0) || !std::isfinite(total);
  Vec3 t = Vec3::Zero();
  for (std::size_t a = 0; a < r.k_t.size(); ++a) t += (r.fallback_t ? 1.0 : r.t_scores[a]) * r.translations[a];
  t /= r.fallback_t ? static_cast<double>(r.k_t.size()) : total;

  parallel_for(candidates.size(), cfg.threads, [&](std::size_t i) {
    scores[i] = visual_score_object({candidates[i].rotation, t}, heatmaps, camera, keypoints);
  });
  r.k_r = top_k(scores, cfg.object_r_k);
  total = 0.0;
  for (int i : r.k_r) {
    r.r_scores.push_back(scores[i]);
    r.rotations.push_back(candidates[i].rotation);
    total += scores[i];
  }
  r.fallback_r = !(total > 0.0) || !std::isfinite(total);
  std::vector<double> w = r.r_scores;
  if (r.fallback_r) std::fill(w.begin(), w.end(), 1.0);
  r.pose = {chordal_mean(r.rotations, w), t};
  return r;
}

double hand_physics_score(const SolveReport& report) { return hand_phys_score(report.residuals); }

HandPhysicsResult physics_aggregate_hand(const HandPose& visual, const std::vector<HandPose>& before_last,
                                         std::span<const int> k4, const HandModel& model, const MeshSdf& object,
                                         const RigidPose& object_pose, const Gravity& gravity,
                                         const AggregationConfig& cfg) {
  const auto& last = joint_hierarchy().levels[3];
  HandPhysicsResult r;
  r.pose = visual;
  r.candidates.assign(k4.begin(), k4.end());
  r.scores.assign(k4.size(), kNegInf);
  parallel_for(k4.size(), cfg.threads, [&](std::size_t a) {
    HandPose pose = visual;
    for (int j : last) pose.theta[j] = before_last.at(k4[a]).theta[j];
    try {
      r.scores[a] = hand_physics_score(solve_pseudo_forces(model, pose, object, object_pose, gravity, cfg.hand_solver));
    } catch (const AllAnchorsFrozen&) {
      r.scores[a] = kNegInf;
    }
  });
  for (int a : top_k(r.scores, cfg.hand_phys_k))
    if (std::isfinite(r.scores[a])) r.selected.push_back(r.candidates[a]);
  r.fallback = r.selected.empty();
  if (r.fallback) return r;
  const std::vector<double> ones(r.selected.size(), 1.0);
  for (int j : last) {
    std::vector<RotationAA> values;
    for (int i : r.selected) values.push_back(before_last[i].theta[j]);
    r.pose.theta[j] = weighted_mean(values, ones);
  }
  return r;
}

double object_physics_score(const GlobalForceField& field, const MeshSdf& object, const Vec3& object_centroid,
                            const RigidPose& pose) {
  ContactState contact;
  contact.center_of_mass = pose.apply(object_centroid);
  contact.distances.reserve(field.size());
  for (const auto& f : field) contact.distances.push_back(object.query(pose.apply_inverse(f.position)).distance);
  return -torque_residual(field, contact.center_of_mass) * contact_residual(field, contact);
}

ObjectPhysicsResult physics_aggregate_object(std::span<const Vec3> translations, std::span<const Mat3> rotations,
                                             const RigidPose& visual_pose, const HandModel& model,
                                             const HandPose& hand, const MeshSdf& object, const Gravity& gravity,
                                             const AggregationConfig& cfg) {
  if (translations.empty() || rotations.empty()) throw InvalidParameter("retained object sets must be nonempty");
  ObjectPhysicsResult r;
  r.pose = visual_pose;
  for (int a = 0; a < static_cast<int>(translations.size()); ++a)
    for (int b = 0; b < static_cast<int>(rotations.size()); ++b) r.pairs.push_back({a, b});
  r.scores.assign(r.pairs.size(), kNegInf);
  GlobalForceField field;
  try {
    field = solve_pseudo_forces(model, hand, object, visual_pose, gravity, cfg.object_solver).field;
  } catch (const AllAnchorsFrozen&) {
    r.fallback = true;
    return r;
  }
  const Vec3 c = centroid(object.mesh());
  parallel_for(r.pairs.size(), cfg.threads, [&](std::size_t p) {
    const RigidPose pose{rotations[r.pairs[p][1]], translations[r.pairs[p][0]]};
    r.scores[p] = object_physics_score(field, object, c, pose);
  });
  for (int p : top_k(r.scores, cfg.object_phys_k))
    if (std::isfinite(r.scores[p])) r.selected.push_back(p);
  r.fallback = r.selected.empty();
  if (r.fallback) return r;
  Vec3 t = Vec3::Zero();
  std::vector<Mat3> rs;
  for (int p : r.selected) {
    t += translations[r.pairs[p][0]];
    rs.push_back(rotations[r.pairs[p][1]]);
  }
  const std::vector<double> ones(rs.size(), 1.0);
  r.pose = {chordal_mean(rs, ones), t / static_cast<double>(r.selected.size())};
  return r;
}

AggregationReport aggregate_full(const Scenario& scene, const CandidateSet& hand, const CandidateSet& object,
                                 const HeatmapStack& hand_heatmaps, const HeatmapStack& object_heatmaps,
                                 const AggregationConfig& cfg) {
  cfg.validate();
  if (hand.entity != Entity::Hand || object.entity != Entity::Object)
    throw InvalidParameter("expected a hand and an object candidate set");
  hand.validate();
  object.validate();
  const HandModel model(scene.shape);
  const Vec3 wrist = scene.hand_pose.translation;  // the wrist position is known
  std::vector<HandPose> hands;
  for (const auto& c : hand.hand) hands.push_back(to_hand_pose(c, wrist));
  std::vector<RigidPose> objects;
  for (const auto& c : object.object) objects.push_back(to_rigid_pose(c));

  const TriMesh mesh = scene.object_mesh();
  const MeshSdf sdf(mesh);

  AggregationReport rep;
  rep.config = cfg;
  rep.hand_visual = visual_aggregate_hand(std::move(hands), hand_heatmaps, scene.camera, model, cfg);
  rep.object_visual = visual_aggregate_object(objects, object_heatmaps, scene.camera, bbox_keypoints_27(mesh), cfg);
  rep.hand = rep.hand_visual.pose;
  rep.object = rep.object_visual.pose;
  if (!cfg.physics) return rep;

  rep.hand_physics = physics_aggregate_hand(rep.hand_visual.pose, rep.hand_visual.before_last, rep.hand_visual.k4,
                                            model, sdf, rep.object_visual.pose, scene.gravity, cfg);
  rep.hand = rep.hand_physics.pose;
  rep.object_physics = physics_aggregate_object(rep.object_visual.translations, rep.object_visual.rotations,
                                                rep.object_visual.pose, model, rep.hand, sdf, scene.gravity, cfg);
  rep.object = rep.object_physics.pose;
  return rep;
}

namespace {

nlohmann::json hand_json(const HandPose& p) {
  nlohmann::json theta = nlohmann::json::array();
  for (const auto& t : p.theta) theta.push_back(detail::vec3_json(t.v));
  return {{"theta", theta}, {"translation", detail::vec3_json(p.translation)}};
}

nlohmann::json object_json(const RigidPose& p) {
  return {{"rotation", detail::mat3_json(p.rotation)}, {"translation", detail::vec3_json(p.translation)}};
}

}  // namespace

nlohmann::json AggregationReport::to_json() const {
  nlohmann::json levels = nlohmann::json::array();
  for (const auto& level : hand_visual.levels) {
    nlohmann::json joints = nlohmann::json::array();
    for (const auto& s : level)
      joints.push_back({{"joint", s.joint},
                        {"selected", s.selected},
                        {"scores", scores_json(s.scores)},
                        {"value", detail::vec3_json(s.value.v)},
                        {"fallback", s.fallback}});
    levels.push_back({{"level", level.empty() ? 0 : joint_hierarchy().level_of(level.front().joint)},
                      {"joints", joints}});
  }
  nlohmann::json j = {
      {"schema", kAggregationSchema},
      {"config", config.to_json()},
      {"hand_visual", {{"levels", levels}, {"k4", hand_visual.k4}, {"k4_scores", scores_json(hand_visual.k4_scores)}}},
      {"object_visual",
       {{"k_t", object_visual.k_t},
        {"t_scores", scores_json(object_visual.t_scores)},
        {"k_r", object_visual.k_r},
        {"r_scores", scores_json(object_visual.r_scores)},
        {"fallback_t", object_visual.fallback_t},
        {"fallback_r", object_visual.fallback_r}}},
      {"visual", {{"hand", hand_json(hand_visual.pose)}, {"object", object_json(object_visual.pose)}}},
      {"final", {{"hand", hand_json(hand)}, {"object", object_json(object)}}}};
  if (config.physics) {
    nlohmann::json pairs = nlohmann::json::array();
    for (const auto& p : object_physics.pairs) pairs.push_back({p[0], p[1]});
    j["hand_physics"] = {{"candidates", hand_physics.candidates},
                         {"scores", scores_json(hand_physics.scores)},
                         {"selected", hand_physics.selected},
                         {"fallback", hand_physics.fallback}};
    j["object_physics"] = {{"pairs", pairs},
                           {"scores", scores_json(object_physics.scores)},
                           {"selected", object_physics.selected},
                           {"fallback", object_physics.fallback}};
  }
  return j;
}

AggregatedPoses read_aggregated_poses(const nlohmann::json& report) {
  if (!report.is_object()) throw SchemaError("aggregation report must be a JSON object");
  detail::check_schema(report, kAggregationSchema);
  const auto& fin = detail::field(report, "", "final");
  const auto& h = detail::field(fin, "final", "hand");
  const auto& o = detail::field(fin, "final", "object");
  AggregatedPoses out;
  const auto& theta = detail::field(h, "final.hand", "theta");
  if (!theta.is_array() || theta.size() != kNumJoints) throw SchemaError("field 'final.hand.theta' must have 16 entries");
  for (int k = 0; k < kNumJoints; ++k) {
    const nlohmann::json wrapper{{"v", theta[k]}};
    out.hand.theta[k] = RotationAA(detail::read_vec3(wrapper, "final.hand.theta", "v"));
  }
  out.hand.translation = detail::read_vec3(h, "final.hand", "translation");
  out.object.rotation = detail::read_mat3(o, "final.object", "rotation");
  out.object.translation = detail::read_vec3(o, "final.object", "translation");
  return out;
}

}  // namespace graspforge

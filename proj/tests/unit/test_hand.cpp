#include "graspforge/error.hpp"
#include "graspforge/hand.hpp"
#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <set>

using namespace graspforge;

namespace {

HandPose random_pose(std::mt19937_64& rng, double spread = 0.5) {
  HandPose p;
  for (auto& t : p.theta) t = RotationAA(test::random_vec(rng, spread));
  p.translation = Vec3(0.02, -0.01, 0.4) + test::random_vec(rng, 0.05);
  return p;
}

// Independent recursion over the keypoint tree: each bone is carried by the
// accumulated rotation of its parent joint.
std::array<Vec3, kNumKeypoints> oracle_fk(const HandPose& pose, const HandModel& model) {
  const auto& parent = HandAsset::builtin().parent;
  const auto& rest = model.rest_keypoints();
  std::array<Mat3, kNumKeypoints> global{};
  std::array<Vec3, kNumKeypoints> out{};
  for (int k = 0; k < kNumKeypoints; ++k) {
    const Mat3 local = k < kNumJoints ? aa_to_matrix(pose.theta[k]) : Mat3::Identity();
    if (parent[k] < 0) {
      global[k] = local;
      out[k] = pose.translation;
    } else {
      global[k] = global[parent[k]] * local;
      out[k] = out[parent[k]] + global[parent[k]] * (rest[k] - rest[parent[k]]);
    }
  }
  return out;
}

}  // namespace

TEST_CASE("rest pose reproduces the asset skeleton") {
  const HandModel model;
  HandPose pose;
  pose.translation = model.rest_keypoints()[0];
  const auto kp = forward_kinematics(pose, model);
  for (int k = 0; k < kNumKeypoints; ++k) CHECK(test::max_abs(kp[k] - HandAsset::builtin().rest[k]) < 1e-15);
  const TriMesh mesh = skin_mesh(pose, model);
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i)
    CHECK(test::max_abs(mesh.vertices[i] - model.rest_mesh().vertices[i]) < 1e-15);
}

TEST_CASE("forward kinematics matches an independent tree walk") {
  const HandModel model;
  std::mt19937_64 rng(21);
  for (int i = 0; i < 200; ++i) {
    const HandPose pose = random_pose(rng);
    const auto a = forward_kinematics(pose, model);
    const auto b = oracle_fk(pose, model);
    for (int k = 0; k < kNumKeypoints; ++k) REQUIRE(test::max_abs(a[k] - b[k]) < 1e-12);
    CHECK(test::max_abs(a[0] - pose.translation) == 0.0);
  }
}

TEST_CASE("wrist rotation moves the whole hand rigidly") {
  const HandModel model;
  std::mt19937_64 rng(22);
  HandPose pose = random_pose(rng);
  const auto before = forward_kinematics(pose, model);
  const TriMesh mesh_before = skin_mesh(pose, model);
  const Mat3 r = test::random_rotation(rng);
  pose.theta[0] = matrix_to_aa(r * aa_to_matrix(pose.theta[0]));
  const auto after = forward_kinematics(pose, model);
  for (int k = 0; k < kNumKeypoints; ++k)
    CHECK(test::max_abs(after[k] - (pose.translation + r * (before[k] - pose.translation))) < 1e-12);
  const TriMesh mesh_after = skin_mesh(pose, model);
  for (std::size_t i = 0; i < mesh_after.vertices.size(); ++i)
    REQUIRE(test::max_abs(mesh_after.vertices[i] - (pose.translation + r * (mesh_before.vertices[i] - pose.translation))) <
            1e-12);
}

TEST_CASE("bending a PIP joint moves only its descendants") {
  const HandModel model;
  std::mt19937_64 rng(23);
  HandPose pose = random_pose(rng);
  const auto before = forward_kinematics(pose, model);
  for (int f = 0; f < kNumFingers; ++f) {
    const int pip = finger_root(f) + 1;
    HandPose bent = pose;
    bent.theta[pip] = RotationAA(0.7, 0.1, -0.2);
    const auto after = forward_kinematics(bent, model);
    const std::set<int> moved{pip + 1, finger_tip(f)};
    for (int k = 0; k < kNumKeypoints; ++k) {
      if (moved.count(k))
        CHECK((after[k] - before[k]).norm() > 1e-4);
      else
        CHECK(test::max_abs(after[k] - before[k]) < 1e-12);
    }
  }
}

TEST_CASE("bone lengths do not depend on the pose") {
  const HandModel model;
  const auto& parent = HandAsset::builtin().parent;
  const auto& rest = model.rest_keypoints();
  std::mt19937_64 rng(24);
  for (int i = 0; i < 50; ++i) {
    const auto kp = forward_kinematics(random_pose(rng, 1.0), model);
    for (int k = 1; k < kNumKeypoints; ++k)
      CHECK(std::abs((kp[k] - kp[parent[k]]).norm() - (rest[k] - rest[parent[k]]).norm()) < 1e-12);
  }
}

TEST_CASE("shape parameters scale the skeleton") {
  const HandModel base;
  HandShape beta{};
  beta[0] = 0.8;
  const HandModel big(beta);
  const double s = 1 + 0.1 * std::tanh(0.8);
  const auto& a = base.rest_keypoints();
  const auto& b = big.rest_keypoints();
  for (int k = 1; k < kNumKeypoints; ++k) CHECK(test::max_abs((b[k] - b[0]) - s * (a[k] - a[0])) < 1e-12);

  HandShape index_long{};
  index_long[1] = 2.0;
  const HandModel longer(index_long);
  const int mcp = finger_root(0);
  const double m = 1 + 0.1 * std::tanh(2.0);
  CHECK((longer.rest_keypoints()[finger_tip(0)] - longer.rest_keypoints()[mcp]).norm() ==
        doctest::Approx(m * (a[finger_tip(0)] - a[mcp]).norm()));
  // The other fingers keep their length.
  CHECK(test::max_abs(longer.rest_keypoints()[finger_tip(1)] - a[finger_tip(1)]) < 1e-15);
}

TEST_CASE("skinning weights and single-bone vertices") {
  const HandModel model;
  for (const auto& inf : model.skin_weights()) {
    CHECK(inf.weight[0] >= 0.0);
    CHECK(inf.weight[1] >= 0.0);
    CHECK(inf.weight[0] + inf.weight[1] == doctest::Approx(1.0).epsilon(1e-12));
  }
  std::mt19937_64 rng(25);
  const HandPose pose = random_pose(rng, 0.8);
  const TriMesh mesh = skin_mesh(pose, model);
  const JointTransforms jt = joint_transforms(pose, model);
  CHECK(mesh.vertices.size() == model.rest_mesh().vertices.size());
  int rigid = 0;
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    const auto& inf = model.skin_weights()[i];
    if (inf.weight[0] != 1.0) continue;
    const int j = inf.joint[0];
    const Vec3 expect = jt.rotation[j] * (model.rest_mesh().vertices[i] - model.rest_keypoints()[j]) + jt.position[j];
    CHECK(test::max_abs(mesh.vertices[i] - expect) < 1e-12);
    ++rigid;
  }
  CHECK(rigid > 0);
}

TEST_CASE("anchor frame of an axis-aligned triangle") {
  const TriMesh tri({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}, {{0, 1, 2}});
  const std::vector<Anchor> anchors{{"a", 0, {1.0 / 3, 1.0 / 3, 1.0 / 3}}};
  const auto st = anchor_states(tri, anchors);
  CHECK(test::max_abs(st[0].position - Vec3(1.0 / 3, 1.0 / 3, 0)) < 1e-15);
  CHECK(test::max_abs(st[0].frame - Mat3::Identity()) < 1e-15);

  const TriMesh flat({{0, 0, 0}, {1e-7, 0, 0}, {0, 1e-7, 0}}, {{0, 1, 2}});
  CHECK_THROWS_AS(anchor_states(flat, anchors), DegenerateTriangle);
  const std::vector<Anchor> bad{{"b", 3, {1, 0, 0}}};
  CHECK_THROWS_AS(anchor_states(tri, bad), DimensionMismatch);
}

TEST_CASE("anchors: 32 on the surface with orthonormal, equivariant frames") {
  const HandModel model;
  REQUIRE(model.anchors().size() == kNumAnchors);
  for (const auto& a : model.anchors()) {
    CHECK(std::min({a.barycentric[0], a.barycentric[1], a.barycentric[2]}) >= 0.0);
    CHECK(a.barycentric[0] + a.barycentric[1] + a.barycentric[2] == doctest::Approx(1.0));
  }
  std::mt19937_64 rng(26);
  for (int i = 0; i < 20; ++i) {
    HandPose pose = random_pose(rng, 0.6);
    const TriMesh mesh = skin_mesh(pose, model);
    const auto st = anchor_states(mesh, model.anchors());
    for (int k = 0; k < kNumAnchors; ++k) {
      const auto& a = model.anchors()[k];
      const auto& f = mesh.faces[a.face];
      Vec3 p = Vec3::Zero();
      for (int c = 0; c < 3; ++c) p += a.barycentric[c] * mesh.vertices[f[c]];
      CHECK(test::max_abs(st[k].position - p) < 1e-15);
      CHECK(test::max_abs(st[k].frame.transpose() * st[k].frame - Mat3::Identity()) < 1e-10);
      CHECK(st[k].frame.determinant() == doctest::Approx(1.0).epsilon(1e-10));
    }
    const Mat3 r = test::random_rotation(rng);
    pose.theta[0] = matrix_to_aa(r * aa_to_matrix(pose.theta[0]));
    const auto rotated = anchor_states(skin_mesh(pose, model), model.anchors());
    for (int k = 0; k < kNumAnchors; ++k) CHECK(test::max_abs(rotated[k].frame - r * st[k].frame) < 1e-10);
  }
}

TEST_CASE("joint hierarchy levels and children") {
  const JointHierarchy& h = joint_hierarchy();
  CHECK(h.levels[0] == std::vector<int>{0});
  int total = 0;
  std::set<int> seen;
  for (int l = 0; l < 4; ++l) {
    if (l > 0) CHECK(h.levels[l].size() == 5);
    total += static_cast<int>(h.levels[l].size());
    for (int j : h.levels[l]) {
      seen.insert(j);
      CHECK(h.level_of(j) == l + 1);  // levels are numbered from 1
      if (j != 0) CHECK(h.level_of(h.parent[j]) < l + 1);
    }
  }
  CHECK(total == kNumJoints);
  CHECK(seen.size() == kNumJoints);

  CHECK(h.children[0].size() == 20);
  for (int f = 0; f < kNumFingers; ++f) {
    const int mcp = finger_root(f), pip = mcp + 1, dip = mcp + 2, tip = finger_tip(f);
    CHECK(h.children[dip] == std::vector<int>{tip});
    std::set<int> all;
    for (int j : {mcp, pip, dip}) {
      CHECK(!h.children[j].empty());
      all.insert(h.children[j].begin(), h.children[j].end());
    }
    // Downstream keypoints of the chain; with the MCP itself, all four of the finger.
    CHECK(all == std::set<int>{pip, dip, tip});
    all.insert(mcp);
    CHECK(all.size() == 4);
  }
}

TEST_CASE("hand asset JSON round trip") {
  const HandAsset& a = HandAsset::builtin();
  const HandAsset b = HandAsset::from_json(a.to_json());
  CHECK(b.to_json() == a.to_json());
  CHECK(b.anchors.size() == kNumAnchors);
}

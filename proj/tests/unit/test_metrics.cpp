#include "graspforge/error.hpp"
#include "graspforge/metrics.hpp"
#include "graspforge/scenario.hpp"
#include "support.hpp"

#include <doctest.h>

#include <set>
#include <sstream>

using namespace graspforge;

namespace {

const CameraIntrinsics kCamera{};

HandGeometry hand_geometry(const HandPose& pose, const HandModel& model) {
  return {forward_kinematics(pose, model), skin_mesh(pose, model).vertices};
}

HandPose random_hand(std::mt19937_64& rng) {
  HandPose p;
  for (auto& t : p.theta) t = RotationAA(test::random_vec(rng, 0.3));
  p.translation = Vec3(0.0, 0.0, 0.45) + test::random_vec(rng, 0.02);
  return p;
}

RigidPose random_object(std::mt19937_64& rng) {
  return {test::random_rotation(rng), Vec3(0.0, 0.0, 0.5) + test::random_vec(rng, 0.03)};
}

PrimitiveSpec box(double x, double y, double z) { return {PrimitiveKind::Box, {x, y, z}, 0}; }

void check_all_zero(const PoseErrors& e) {
  CHECK(e.mje == 0.0);
  CHECK(e.pa_mje == 0.0);
  CHECK(e.mme == 0.0);
  CHECK(e.oce == 0.0);
  CHECK(e.mce == 0.0);
  CHECK(e.smce == 0.0);
  CHECK(e.add == 0.0);
  CHECK(e.adds == 0.0);
  CHECK(e.add_rate == 100.0);
  CHECK(e.adds_rate == 100.0);
  CHECK(e.rep == 0.0);
}

}  // namespace

TEST_CASE("identical prediction scores zero everywhere") {
  const HandModel model;
  std::mt19937_64 rng(91);
  for (const auto& spec : {box(0.06, 0.04, 0.1), PrimitiveSpec{}, PrimitiveSpec{PrimitiveKind::Cylinder, {0.03, 0.1}, 2}}) {
    const TriMesh mesh = make_primitive(spec);
    const HandGeometry h = hand_geometry(random_hand(rng), model);
    const RigidPose o = random_object(rng);
    check_all_zero(pose_errors(h, h, o, o, mesh, SymmetrySpec::for_primitive(spec), kCamera));
  }
}

TEST_CASE("procrustes-aligned joint error ignores a similarity transform") {
  const HandModel model;
  std::mt19937_64 rng(92);
  const TriMesh mesh = make_primitive(box(0.05, 0.05, 0.05));
  const RigidPose o{Mat3::Identity(), Vec3(0, 0, 0.5)};
  for (int trial = 0; trial < 20; ++trial) {
    const HandGeometry gt = hand_geometry(random_hand(rng), model);
    HandGeometry pred = gt;
    const Mat3 r = test::random_rotation(rng);
    const Vec3 t = test::random_vec(rng, 0.05);
    const double s = test::uniform(rng, 0.8, 1.2);
    for (auto& k : pred.keypoints) k = s * (r * k) + t;
    for (auto& v : pred.vertices) v = s * (r * v) + t;
    const PoseErrors e = pose_errors(pred, gt, o, o, mesh, {}, kCamera);
    CHECK(e.mje > 1.0);
    CHECK(e.mme > 1.0);
    CHECK(e.pa_mje < 1e-9);
    MetricsConfig rigid;
    rigid.pa_mode = AlignMode::Rigid;
    if (std::abs(s - 1.0) > 0.05) CHECK(pose_errors(pred, gt, o, o, mesh, {}, kCamera, rigid).pa_mje > 1e-3);
  }
}

TEST_CASE("symmetric objects: SMCE and ADD-S forgive the symmetry") {
  const HandModel model;
  std::mt19937_64 rng(93);
  const HandGeometry h = hand_geometry(random_hand(rng), model);

  const PrimitiveSpec spec = box(0.08, 0.05, 0.03);
  const SymmetrySpec sym = SymmetrySpec::for_primitive(spec);
  CHECK(sym.rotations.size() == 4);  // identity plus three half-turns
  const TriMesh mesh = make_primitive(spec);
  const RigidPose gt = random_object(rng);
  const RigidPose flipped{gt.rotation * Mat3(Vec3(-1, -1, 1).asDiagonal()), gt.translation};
  const PoseErrors e = pose_errors(h, h, flipped, gt, mesh, sym, kCamera);
  CHECK(e.mce > 10.0);
  CHECK(e.smce < 1e-9);
  CHECK(e.add > 10.0);
  CHECK(e.adds < 1e-9);
  CHECK(e.oce < 1e-9);
  CHECK(e.rep > 1.0);
  CHECK(pose_errors(h, h, flipped, gt, mesh, SymmetrySpec::none(), kCamera).smce == e.mce);

  // A cylinder spun about its axis: the sampled continuous symmetry is within a degree.
  const PrimitiveSpec cyl{PrimitiveKind::Cylinder, {0.03, 0.1}, 3};
  const TriMesh cmesh = make_primitive(cyl);
  const RigidPose spun{gt.rotation * aa_to_matrix(RotationAA(0, 0, 1.234)), gt.translation};
  const PoseErrors c = pose_errors(h, h, spun, gt, cmesh, SymmetrySpec::for_primitive(cyl), kCamera);
  CHECK(c.mce > 10.0);
  CHECK(c.smce < 1000.0 * 0.03 * test::kPi / 180.0);
  // Nearest neighbours lie within half the spacing of the 64 rim segments.
  CHECK(c.adds < 1000.0 * test::kPi * 0.03 / 64.0);

  // Any rotation of a sphere is free.
  const PrimitiveSpec ball{PrimitiveKind::Sphere, {0.04}, 2};
  const RigidPose turned{test::random_rotation(rng), gt.translation};
  const PoseErrors b = pose_errors(h, h, turned, gt, make_primitive(ball), SymmetrySpec::for_primitive(ball), kCamera);
  CHECK(b.smce < 1e-9);
  CHECK(b.mce > 1.0);
}

TEST_CASE("metric inequalities hold on random inputs") {
  const HandModel model;
  std::mt19937_64 rng(94);
  const PrimitiveSpec spec = box(0.05, 0.05, 0.08);
  const TriMesh mesh = make_primitive(spec);
  const SymmetrySpec sym = SymmetrySpec::for_primitive(spec);
  for (int trial = 0; trial < 50; ++trial) {
    const PoseErrors e = pose_errors(hand_geometry(random_hand(rng), model), hand_geometry(random_hand(rng), model),
                                     random_object(rng), random_object(rng), mesh, sym, kCamera);
    CHECK(e.adds <= e.add);
    CHECK(e.smce <= e.mce);
    CHECK(e.pa_mje <= e.mje + 1e-9);
    for (double v : {e.mje, e.pa_mje, e.mme, e.oce, e.mce, e.smce, e.add, e.adds, e.rep}) CHECK(v >= 0.0);
  }
}

TEST_CASE("3D metrics are invariant under a shared rigid motion") {
  const HandModel model;
  std::mt19937_64 rng(95);
  const PrimitiveSpec spec = box(0.06, 0.04, 0.1);
  const TriMesh mesh = make_primitive(spec);
  const SymmetrySpec sym = SymmetrySpec::for_primitive(spec);
  for (int trial = 0; trial < 20; ++trial) {
    const HandGeometry ph = hand_geometry(random_hand(rng), model), gh = hand_geometry(random_hand(rng), model);
    const RigidPose po = random_object(rng), go = random_object(rng);
    const PoseErrors a = pose_errors(ph, gh, po, go, mesh, sym, kCamera);

    // Rotate about a point in front of the camera so REP stays defined.
    const Mat3 r = test::random_rotation(rng);
    const Vec3 c(0, 0, 0.5);
    const Vec3 t = c - r * c + test::random_vec(rng, 0.02);
    const auto move_hand = [&](HandGeometry g) {
      for (auto& k : g.keypoints) k = r * k + t;
      for (auto& v : g.vertices) v = r * v + t;
      return g;
    };
    const auto move_object = [&](const RigidPose& p) { return RigidPose{r * p.rotation, r * p.translation + t}; };
    const PoseErrors b = pose_errors(move_hand(ph), move_hand(gh), move_object(po), move_object(go), mesh, sym, kCamera);
    for (auto [x, y] : {std::pair{a.mje, b.mje}, {a.pa_mje, b.pa_mje}, {a.mme, b.mme}, {a.oce, b.oce}, {a.mce, b.mce},
                        {a.smce, b.smce}, {a.add, b.add}, {a.adds, b.adds}})
      CHECK(y == doctest::Approx(x).epsilon(1e-9));
    CHECK(a.add_rate == b.add_rate);
  }
}

TEST_CASE("reprojection error survives the scale-depth ambiguity") {
  const HandModel model;
  std::mt19937_64 rng(96);
  const HandGeometry h = hand_geometry(random_hand(rng), model);
  for (int trial = 0; trial < 10; ++trial) {
    const double lambda = test::uniform(rng, 0.5, 2.0);
    const double edge = test::uniform(rng, 0.03, 0.1);
    const RigidPose po = random_object(rng), go = random_object(rng);
    const double a = pose_errors(h, h, po, go, make_primitive(box(edge, edge, 1.5 * edge)), {}, kCamera).rep;
    const double b = pose_errors(h, h, {po.rotation, lambda * po.translation}, {go.rotation, lambda * go.translation},
                                 make_primitive(box(lambda * edge, lambda * edge, 1.5 * lambda * edge)), {}, kCamera)
                         .rep;
    CHECK(b == doctest::Approx(a).epsilon(1e-9));
  }
}

TEST_CASE("ADD threshold rates") {
  const HandModel model;
  std::mt19937_64 rng(97);
  const HandGeometry h = hand_geometry(random_hand(rng), model);
  const TriMesh mesh = make_primitive(box(0.03, 0.04, 0.12));
  const double d = diameter(model_points(mesh, 2048));
  CHECK(d == doctest::Approx(std::sqrt(0.03 * 0.03 + 0.04 * 0.04 + 0.12 * 0.12)));
  const RigidPose gt{Mat3::Identity(), Vec3(0, 0, 0.5)};
  const RigidPose near{gt.rotation, gt.translation + Vec3(0.099 * d, 0, 0)};
  const RigidPose far{gt.rotation, gt.translation + Vec3(0.101 * d, 0, 0)};
  CHECK(pose_errors(h, h, near, gt, mesh, {}, kCamera).add_rate == 100.0);
  CHECK(pose_errors(h, h, far, gt, mesh, {}, kCamera).add_rate == 0.0);
  CHECK(pose_errors(h, h, far, gt, mesh, {}, kCamera).add == doctest::Approx(101.0 * d));
}

TEST_CASE("farthest-point model points") {
  const TriMesh sphere = make_primitive({PrimitiveKind::Sphere, {0.05}, 3});
  const auto pts = model_points(sphere, 100);
  REQUIRE(pts.size() == 100);
  CHECK(pts[0] == sphere.vertices[0]);
  CHECK(model_points(sphere, 100) == pts);
  // The second point is the vertex farthest from the first: its antipode.
  CHECK((pts[1] + pts[0]).norm() < 1e-9);
  std::set<std::tuple<double, double, double>> unique;
  for (const auto& p : pts) unique.insert({p.x(), p.y(), p.z()});
  CHECK(unique.size() == pts.size());
  CHECK(model_points(make_primitive(box(1, 1, 1)), 2048).size() == 8);
  CHECK_THROWS_AS(model_points(TriMesh{}, 10), EmptyMesh);
  CHECK_THROWS_AS(model_points(sphere, 0), InvalidParameter);

  std::mt19937_64 rng(98);
  std::vector<Vec3> cloud;
  for (int i = 0; i < 60; ++i) cloud.push_back(test::random_vec(rng));
  double brute = 0.0;
  for (const auto& a : cloud)
    for (const auto& b : cloud) brute = std::max(brute, (a - b).norm());
  CHECK(diameter(cloud) == doctest::Approx(brute).epsilon(1e-15));
}

TEST_CASE("pose errors reject mismatched correspondences") {
  const HandModel model;
  std::mt19937_64 rng(99);
  const HandGeometry h = hand_geometry(random_hand(rng), model);
  HandGeometry short_mesh = h;
  short_mesh.vertices.pop_back();
  const RigidPose o{Mat3::Identity(), Vec3(0, 0, 0.5)};
  CHECK_THROWS_AS(pose_errors(short_mesh, h, o, o, make_primitive(box(1, 1, 1)), {}, kCamera), DimensionMismatch);
}

TEST_CASE("contact and penetration") {
  const PrimitiveSpec cube = box(0.1, 0.1, 0.1);
  const MeshSdf object(make_primitive(cube));
  const RigidPose pose{Mat3::Identity(), Vec3(0, 0, 0.5)};
  const double radius = 0.02;
  const TriMesh ball = make_primitive({PrimitiveKind::Sphere, {radius}, 4});
  const auto placed = [&](double gap) {
    // The ball's lowest point sits `gap` above the cube's +x face.
    return transformed(ball, {Mat3::Identity(), pose.translation + Vec3(0.05 + radius + gap, 0, 0)});
  };

  const ContactReport far = contact_and_penetration(placed(0.1), object, pose);
  CHECK(!far.contact);
  CHECK(far.penetration == 0.0);

  const ContactReport deep = contact_and_penetration(placed(-0.005), object, pose);
  CHECK(deep.contact);
  CHECK(std::abs(deep.penetration - 0.005) < 0.0005);

  const ContactReport touching = contact_and_penetration(placed(0.001), object, pose, 0.002);
  CHECK(touching.contact);
  CHECK(touching.penetration == 0.0);
  CHECK(touching.min_distance == doctest::Approx(0.001).epsilon(0.05));
  CHECK(!contact_and_penetration(placed(0.003), object, pose, 0.002).contact);
  CHECK_THROWS_AS(contact_and_penetration(TriMesh{}, object, pose), EmptyMesh);
}

TEST_CASE("stability proxy") {
  const Scenario pinch = build_canonical("pinch-sphere", 0);
  const HandModel model(pinch.shape);
  const MeshSdf sdf(pinch.object_mesh());
  const double base = stability_proxy(model, pinch.hand_pose, sdf, pinch.object_pose, pinch.gravity);
  CHECK(base <= 1e-2);

  const Scenario hover = build_canonical("hover-no-contact", 0);
  const MeshSdf hsdf(hover.object_mesh());
  CHECK(stability_proxy(HandModel(hover.shape), hover.hand_pose, hsdf, hover.object_pose, hover.gravity) == 1.0);

  // Moving the whole scene rigidly, gravity included, changes nothing.
  std::mt19937_64 rng(100);
  const Mat3 r = test::random_rotation(rng);
  const Vec3 t = test::random_vec(rng, 0.05);
  HandPose hand = pinch.hand_pose;
  hand.theta[0] = matrix_to_aa(r * aa_to_matrix(hand.theta[0]));
  hand.translation = r * hand.translation + t;
  const RigidPose object{r * pinch.object_pose.rotation, r * pinch.object_pose.translation + t};
  const Gravity g{r * pinch.gravity.direction, pinch.gravity.magnitude};
  CHECK(stability_proxy(model, hand, sdf, object, g) == doctest::Approx(base).epsilon(1e-6));
}

TEST_CASE("symmetry specs") {
  SymmetrySpec s;
  CHECK_NOTHROW(s.validate());
  s.rotations = {Mat3(Vec3(-1, -1, 1).asDiagonal())};
  CHECK_THROWS_AS(s.validate(), InvalidParameter);
  s.rotations.push_back(Mat3::Identity());
  s.rotations.push_back(Mat3(Vec3(1, 1, -1).asDiagonal()));
  CHECK_THROWS_AS(s.validate(), InvalidParameter);

  CHECK(SymmetrySpec::for_primitive(box(0.1, 0.1, 0.1)).rotations.size() == 24);
  CHECK(SymmetrySpec::for_primitive(box(0.1, 0.1, 0.2)).rotations.size() == 8);
  const SymmetrySpec cyl = SymmetrySpec::for_primitive({PrimitiveKind::Cylinder, {0.03, 0.1}, 2});
  CHECK(cyl.expanded().size() == 720);
  for (const auto& m : cyl.expanded()) CHECK((m.transpose() * m - Mat3::Identity()).norm() < 1e-12);

  const SymmetrySpec back = SymmetrySpec::from_json(cyl.to_json());
  CHECK(back.to_json() == cyl.to_json());
  nlohmann::json j = cyl.to_json();
  j["extra"] = 1;
  CHECK_THROWS_AS(SymmetrySpec::from_json(j), SchemaError);
}

TEST_CASE("averaging rows and CSV output") {
  MetricsRow a, b;
  a.name = "a";
  b.name = "b";
  a.pose.mje = 2.0;
  b.pose.mje = 4.0;
  a.pose.add_rate = 100.0;
  b.pose.add_rate = 0.0;
  a.physics.cp = 100.0;
  b.physics.cp = 0.0;
  a.physics.pd = 1.0;
  b.physics.pd = 3.0;
  const MetricsRow rows[] = {a, b};
  const MetricsRow m = average(rows);
  CHECK(m.name == "mean");
  CHECK(m.pose.mje == 3.0);
  CHECK(m.pose.add_rate == 50.0);
  CHECK(m.physics.cp == 50.0);
  CHECK(m.physics.pd == 2.0);

  std::ostringstream out;
  write_csv(out, rows);
  std::istringstream in(out.str());
  std::string header, line;
  std::getline(in, header);
  CHECK(header == "name,MJE,PA-MJE,OCE,MCE,SMCE,ADD,ADD-S,REP,CP,PD");
  std::getline(in, line);
  CHECK(line.rfind("a,2,", 0) == 0);
  CHECK(std::count(line.begin(), line.end(), ',') == 10);
  CHECK(to_json(m.pose).at("mje_mm") == 3.0);
}

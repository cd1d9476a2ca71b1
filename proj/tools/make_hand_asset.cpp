// Designs the 32-anchor layout on the canonical hand mesh and writes the
// completed asset. Run after editing the skeleton or mesh parameters:
//
//   make_hand_asset assets/hand_model_v1.json assets/hand_model_v1.json

#include "graspforge/hand.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <numbers>

using namespace graspforge;

namespace {

int nearest_face(const TriMesh& mesh, const Vec3& target, const Vec3& normal, double min_cos) {
  int best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  for (int f = 0; f < static_cast<int>(mesh.faces.size()); ++f) {
    const auto& face = mesh.faces[f];
    const Vec3& a = mesh.vertices[face[0]];
    const Vec3& b = mesh.vertices[face[1]];
    const Vec3& c = mesh.vertices[face[2]];
    const Vec3 n = (b - a).cross(c - a).normalized();
    if (n.dot(normal) < min_cos) continue;
    const double d = ((a + b + c) / 3.0 - target).norm();
    if (d < best_d - 1e-9) {  // near-ties keep the lower index so reruns are stable
      best_d = d;
      best = f;
    }
  }
  return best;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 3) {
    std::cerr << "usage: make_hand_asset <in.json> <out.json>\n";
    return 2;
  }
  std::ifstream in(argv[1]);
  HandAsset asset = HandAsset::from_json(nlohmann::json::parse(in));
  asset.anchors.clear();
  const HandModel model({}, asset);
  const TriMesh& mesh = model.rest_mesh();
  const auto& rest = model.rest_keypoints();

  static const char* pads[4] = {"proximal_pad", "middle_pad", "distal_pad", "tip_pad"};
  for (const auto& finger : asset.fingers) {
    const Vec3 q0 = rest[finger.joints[0]], q1 = rest[finger.joints[1]];
    const Vec3 q2 = rest[finger.joints[2]], q3 = rest[finger.tip];
    const Vec3 d = (q3 - q0).normalized();
    const Vec3 pad = (finger.pad_direction - finger.pad_direction.dot(d) * d).normalized();
    const double r = finger.radius;
    const double s = std::sin(std::numbers::pi / 4);
    const std::array<std::pair<Vec3, Vec3>, 4> targets = {
        std::pair{0.5 * (q0 + q1) + r * pad, pad}, std::pair{0.5 * (q1 + q2) + r * pad, pad},
        std::pair{0.5 * (q2 + q3) + r * pad, pad},
        std::pair{q3 + r * s * (d + pad), Vec3(s * (d + pad))}};
    for (int k = 0; k < 4; ++k) {
      const int face = nearest_face(mesh, targets[k].first, targets[k].second, 0.6);
      asset.anchors.push_back({finger.name + "_" + pads[k], face, {1.0 / 3, 1.0 / 3, 1.0 / 3}});
    }
  }
  const double xs[4] = {-0.035, -0.015, 0.005, 0.025};
  const double ys[3] = {0.015, 0.040, 0.065};
  for (int row = 0; row < 3; ++row)
    for (int col = 0; col < 4; ++col) {
      const Vec3 target(xs[col], ys[row], asset.palm_max.z());
      const int face = nearest_face(mesh, target, Vec3::UnitZ(), 0.9);
      asset.anchors.push_back({"palm_r" + std::to_string(row) + "_c" + std::to_string(col), face,
                               {1.0 / 3, 1.0 / 3, 1.0 / 3}});
    }

  std::ofstream out(argv[2]);
  out << asset.to_json().dump(2) << '\n';
  std::cout << "wrote " << asset.anchors.size() << " anchors, mesh has " << mesh.vertices.size()
            << " vertices / " << mesh.faces.size() << " faces\n";
  return 0;
}

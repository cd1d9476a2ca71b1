#pragma once

#include "graspforge/geom.hpp"

#include <array>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace graspforge {

using Face = std::array<int, 3>;

/// Indexed triangle mesh. Faces are counter-clockwise seen from outside.
struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<Face> faces;

  TriMesh() = default;
  /// Throws DimensionMismatch when a face index is out of range.
  TriMesh(std::vector<Vec3> v, std::vector<Face> f);

  bool empty() const { return vertices.empty() || faces.empty(); }
};

struct Aabb {
  Vec3 min = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 max = Vec3::Constant(-std::numeric_limits<double>::infinity());

  void extend(const Vec3& p) {
    min = min.cwiseMin(p);
    max = max.cwiseMax(p);
  }
  void extend(const Aabb& b) {
    min = min.cwiseMin(b.min);
    max = max.cwiseMax(b.max);
  }
  Vec3 center() const { return 0.5 * (min + max); }
  double squared_distance(const Vec3& p) const {
    return (min - p).cwiseMax(p - max).cwiseMax(0.0).squaredNorm();
  }
};

Aabb bounds(const TriMesh& mesh);
/// Signed volume by the divergence theorem; positive for outward faces.
double volume(const TriMesh& mesh);
double surface_area(const TriMesh& mesh);
/// Volumetric centroid (centre of mass at uniform density).
Vec3 centroid(const TriMesh& mesh);
/// Drops faces whose area is below min_area.
TriMesh remove_degenerate_faces(const TriMesh& mesh, double min_area = 1e-20);
TriMesh transformed(const TriMesh& mesh, const RigidPose& pose);

struct SdfResult {
  double distance = 0.0;  ///< meters, negative inside
  Vec3 closest = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();  ///< outward unit pseudo-normal of the closest feature
};

/// Signed-distance queries against a closed, consistently oriented mesh.
/// Sign comes from angle-weighted pseudo-normals of the closest feature;
/// an AABB tree accelerates the search. Immutable after construction.
class MeshSdf {
 public:
  explicit MeshSdf(TriMesh mesh);

  SdfResult query(const Vec3& p) const;
  /// Exhaustive reference path, used as a test oracle.
  SdfResult query_bruteforce(const Vec3& p) const;

  const TriMesh& mesh() const { return mesh_; }

 private:
  struct Node {
    Aabb box;
    int left = -1;   // child index, -1 for leaves
    int right = -1;
    int begin = 0;   // range into order_ for leaves
    int end = 0;
  };

  struct Candidate {
    double dist2 = std::numeric_limits<double>::infinity();
    int face = -1;
    int feature = 0;  // 0..2 vertex, 3..5 edge (v0v1, v1v2, v2v0), 6 face
    Vec3 point = Vec3::Zero();
  };

  int build(int begin, int end);
  void test_face(int f, const Vec3& p, Candidate& best) const;
  SdfResult finish(const Vec3& p, const Candidate& best) const;

  TriMesh mesh_;
  std::vector<Vec3> face_normals_;
  std::vector<std::array<Vec3, 3>> edge_normals_;
  std::vector<Vec3> vertex_normals_;
  std::vector<Aabb> face_boxes_;
  std::vector<Vec3> face_centers_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
};

/// One-off convenience; prefer a persistent MeshSdf for repeated queries.
SdfResult signed_distance(const TriMesh& mesh, const Vec3& p);

enum class PrimitiveKind { Sphere, Box, Cylinder };

PrimitiveKind primitive_kind_from_string(const std::string& name);
std::string to_string(PrimitiveKind kind);

/// Parameters of a synthetic object.
///   sphere:   dimensions = {radius}
///   box:      dimensions = {size_x, size_y, size_z} (full edge lengths)
///   cylinder: dimensions = {radius, height}, axis along z
/// Sphere level L is a geodesic icosphere of frequency 3*2^(L-1) (level 0 is
/// the bare icosahedron), so level 4 has 11520 faces. Cylinders use 8*2^L
/// segments around the axis. Boxes ignore the level.
struct PrimitiveSpec {
  PrimitiveKind kind = PrimitiveKind::Sphere;
  std::vector<double> dimensions{0.05};
  int level = 3;
};

/// Watertight, outward-oriented mesh centred at the origin. Throws
/// InvalidDimensions for non-positive or missing dimensions.
TriMesh make_primitive(const PrimitiveSpec& spec);

/// Centre, 8 corners, 12 edge midpoints, 6 face midpoints of the object-frame
/// AABB. Corner i has x = max if bit 0 of i is set, y = max for bit 1,
/// z = max for bit 2. Edges run x-edges (0,1),(2,3),(4,5),(6,7), then
/// y-edges (0,2),(1,3),(4,6),(5,7), then z-edges (0,4),(1,5),(2,6),(3,7).
/// Faces follow -x, +x, -y, +y, -z, +z.
using ObjectKeypoints27 = std::array<Vec3, 27>;
ObjectKeypoints27 bbox_keypoints_27(const TriMesh& mesh);

inline constexpr std::array<std::array<int, 2>, 12> kBoxEdges{{
    {0, 1}, {2, 3}, {4, 5}, {6, 7},
    {0, 2}, {1, 3}, {4, 6}, {5, 7},
    {0, 4}, {1, 5}, {2, 6}, {3, 7},
}};

/// Wavefront OBJ subset: `v` and `f` records; `/`-suffixes on face entries are
/// ignored and polygons are fan-triangulated.
TriMesh load_obj(const std::filesystem::path& path);
TriMesh parse_obj(const std::string& text, const std::string& source_name = "<string>");
void save_obj(const TriMesh& mesh, const std::filesystem::path& path);

}  // namespace graspforge

#include "graspforge/mesh.hpp"

#include "graspforge/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <sstream>
#include <unordered_map>

namespace graspforge {

TriMesh::TriMesh(std::vector<Vec3> v, std::vector<Face> f)
    : vertices(std::move(v)), faces(std::move(f)) {
  const int n = static_cast<int>(vertices.size());
  for (std::size_t i = 0; i < faces.size(); ++i)
    for (int idx : faces[i])
      if (idx < 0 || idx >= n)
        throw DimensionMismatch("face " + std::to_string(i) + " references vertex " +
                                std::to_string(idx) + " of " + std::to_string(n));
}

Aabb bounds(const TriMesh& mesh) {
  Aabb box;
  for (const Vec3& v : mesh.vertices) box.extend(v);
  return box;
}

double volume(const TriMesh& mesh) {
  double six_v = 0.0;
  for (const Face& f : mesh.faces)
    six_v += mesh.vertices[f[0]].dot(mesh.vertices[f[1]].cross(mesh.vertices[f[2]]));
  return six_v / 6.0;
}

double surface_area(const TriMesh& mesh) {
  double a = 0.0;
  for (const Face& f : mesh.faces) {
    const Vec3& p0 = mesh.vertices[f[0]];
    a += 0.5 * (mesh.vertices[f[1]] - p0).cross(mesh.vertices[f[2]] - p0).norm();
  }
  return a;
}

Vec3 centroid(const TriMesh& mesh) {
  // signed tetrahedra against the origin
  double vol = 0.0;
  Vec3 moment = Vec3::Zero();
  for (const Face& f : mesh.faces) {
    const Vec3& a = mesh.vertices[f[0]];
    const Vec3& b = mesh.vertices[f[1]];
    const Vec3& c = mesh.vertices[f[2]];
    const double v = a.dot(b.cross(c)) / 6.0;
    vol += v;
    moment += v * (a + b + c) / 4.0;
  }
  if (std::abs(vol) < 1e-300) return bounds(mesh).center();
  return moment / vol;
}

TriMesh remove_degenerate_faces(const TriMesh& mesh, double min_area) {
  std::vector<Face> kept;
  kept.reserve(mesh.faces.size());
  for (const Face& f : mesh.faces) {
    const Vec3& p0 = mesh.vertices[f[0]];
    const double area =
        0.5 * (mesh.vertices[f[1]] - p0).cross(mesh.vertices[f[2]] - p0).norm();
    if (area >= min_area) kept.push_back(f);
  }
  return TriMesh(mesh.vertices, std::move(kept));
}

TriMesh transformed(const TriMesh& mesh, const RigidPose& pose) {
  TriMesh out = mesh;
  for (Vec3& v : out.vertices) v = pose.apply(v);
  return out;
}

// ---------------------------------------------------------------------------
// signed distance

namespace {

/// Closest point on triangle abc to p, with the Voronoi feature it lies in
/// (0..2 vertex, 3 edge ab, 4 edge bc, 5 edge ca, 6 interior).
std::pair<Vec3, int> closest_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b,
                                         const Vec3& c) {
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return {a, 0};

  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return {b, 1};

  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
    const double v = d1 / (d1 - d3);
    return {a + v * ab, 3};
  }

  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return {c, 2};

  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
    const double w = d2 / (d2 - d6);
    return {a + w * ac, 5};
  }

  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return {b + w * (c - b), 4};
  }

  const double denom = 1.0 / (va + vb + vc);
  const double v = vb * denom, w = vc * denom;
  return {a + ab * v + ac * w, 6};
}

std::uint64_t edge_key(int a, int b) {
  const auto lo = static_cast<std::uint64_t>(std::min(a, b));
  const auto hi = static_cast<std::uint64_t>(std::max(a, b));
  return (lo << 32) | hi;
}

Vec3 normalized_or(const Vec3& v, const Vec3& fallback) {
  const double n = v.norm();
  return n > 1e-300 ? Vec3(v / n) : fallback;
}

}  // namespace

MeshSdf::MeshSdf(TriMesh mesh) : mesh_(std::move(mesh)) {
  if (mesh_.empty()) throw EmptyMesh("signed distance needs a non-empty mesh");
  const std::size_t nf = mesh_.faces.size();
  face_normals_.resize(nf);
  edge_normals_.resize(nf);
  face_boxes_.resize(nf);
  face_centers_.resize(nf);
  vertex_normals_.assign(mesh_.vertices.size(), Vec3::Zero());

  std::unordered_map<std::uint64_t, Vec3> edge_sum;
  edge_sum.reserve(nf * 2);
  for (std::size_t f = 0; f < nf; ++f) {
    const Face& face = mesh_.faces[f];
    const Vec3& a = mesh_.vertices[face[0]];
    const Vec3& b = mesh_.vertices[face[1]];
    const Vec3& c = mesh_.vertices[face[2]];
    const Vec3 n = normalized_or((b - a).cross(c - a), Vec3::UnitZ());
    face_normals_[f] = n;
    for (int e = 0; e < 3; ++e)
      edge_sum.try_emplace(edge_key(face[e], face[(e + 1) % 3]), Vec3::Zero()).first->second += n;
    for (int k = 0; k < 3; ++k) {
      const Vec3& p = mesh_.vertices[face[k]];
      const Vec3 u = mesh_.vertices[face[(k + 1) % 3]] - p;
      const Vec3 w = mesh_.vertices[face[(k + 2) % 3]] - p;
      const double angle = std::atan2(u.cross(w).norm(), u.dot(w));
      vertex_normals_[face[k]] += angle * n;
    }
    Aabb box;
    box.extend(a);
    box.extend(b);
    box.extend(c);
    face_boxes_[f] = box;
    face_centers_[f] = (a + b + c) / 3.0;
  }
  for (std::size_t f = 0; f < nf; ++f) {
    const Face& face = mesh_.faces[f];
    for (int e = 0; e < 3; ++e)
      edge_normals_[f][e] = normalized_or(edge_sum[edge_key(face[e], face[(e + 1) % 3])],
                                          face_normals_[f]);
  }
  for (Vec3& n : vertex_normals_) n = normalized_or(n, Vec3::UnitZ());

  order_.resize(nf);
  for (std::size_t i = 0; i < nf; ++i) order_[i] = static_cast<int>(i);
  nodes_.reserve(2 * nf);
  build(0, static_cast<int>(nf));
}

int MeshSdf::build(int begin, int end) {
  const int index = static_cast<int>(nodes_.size());
  nodes_.emplace_back();
  Aabb box;
  Aabb centers;
  for (int i = begin; i < end; ++i) {
    box.extend(face_boxes_[order_[i]]);
    centers.extend(face_centers_[order_[i]]);
  }
  nodes_[index].box = box;
  if (end - begin <= 4) {
    nodes_[index].begin = begin;
    nodes_[index].end = end;
    return index;
  }
  int axis = 0;
  (centers.max - centers.min).maxCoeff(&axis);
  const int mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](int a, int b) {
                     const double ca = face_centers_[a][axis], cb = face_centers_[b][axis];
                     return ca < cb || (ca == cb && a < b);
                   });
  const int left = build(begin, mid);
  const int right = build(mid, end);
  nodes_[index].left = left;
  nodes_[index].right = right;
  return index;
}

void MeshSdf::test_face(int f, const Vec3& p, Candidate& best) const {
  const Face& face = mesh_.faces[f];
  const auto [q, feature] = closest_on_triangle(p, mesh_.vertices[face[0]],
                                                mesh_.vertices[face[1]], mesh_.vertices[face[2]]);
  const double d2 = (p - q).squaredNorm();
  if (d2 < best.dist2 || (d2 == best.dist2 && f < best.face)) {
    best.dist2 = d2;
    best.face = f;
    best.feature = feature;
    best.point = q;
  }
}

SdfResult MeshSdf::finish(const Vec3& p, const Candidate& best) const {
  const Face& face = mesh_.faces[best.face];
  Vec3 pseudo;
  if (best.feature < 3)
    pseudo = vertex_normals_[face[best.feature]];
  else if (best.feature < 6)
    pseudo = edge_normals_[best.face][best.feature - 3];
  else
    pseudo = face_normals_[best.face];

  SdfResult r;
  r.closest = best.point;
  r.normal = pseudo;
  const double dist = std::sqrt(best.dist2);
  r.distance = (p - best.point).dot(pseudo) < 0.0 ? -dist : dist;
  return r;
}

SdfResult MeshSdf::query(const Vec3& p) const {
  Candidate best;
  int stack[128];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const Node& node = nodes_[stack[--top]];
    if (node.box.squared_distance(p) > best.dist2) continue;
    if (node.left < 0) {
      for (int i = node.begin; i < node.end; ++i) test_face(order_[i], p, best);
      continue;
    }
    const double dl = nodes_[node.left].box.squared_distance(p);
    const double dr = nodes_[node.right].box.squared_distance(p);
    // visit the nearer child first
    if (dl <= dr) {
      stack[top++] = node.right;
      stack[top++] = node.left;
    } else {
      stack[top++] = node.left;
      stack[top++] = node.right;
    }
  }
  return finish(p, best);
}

SdfResult MeshSdf::query_bruteforce(const Vec3& p) const {
  Candidate best;
  for (int f = 0; f < static_cast<int>(mesh_.faces.size()); ++f) test_face(f, p, best);
  return finish(p, best);
}

SdfResult signed_distance(const TriMesh& mesh, const Vec3& p) { return MeshSdf(mesh).query(p); }

// ---------------------------------------------------------------------------
// primitives

PrimitiveKind primitive_kind_from_string(const std::string& name) {
  if (name == "sphere") return PrimitiveKind::Sphere;
  if (name == "box") return PrimitiveKind::Box;
  if (name == "cylinder") return PrimitiveKind::Cylinder;
  throw InvalidParameter("unknown primitive kind '" + name + "'");
}

std::string to_string(PrimitiveKind kind) {
  switch (kind) {
    case PrimitiveKind::Sphere: return "sphere";
    case PrimitiveKind::Box: return "box";
    case PrimitiveKind::Cylinder: return "cylinder";
  }
  return "unknown";
}

namespace {

/// Orients every face of a convex, origin-centred mesh outward.
void orient_outward(TriMesh& mesh) {
  for (Face& f : mesh.faces) {
    const Vec3& a = mesh.vertices[f[0]];
    const Vec3& b = mesh.vertices[f[1]];
    const Vec3& c = mesh.vertices[f[2]];
    if ((b - a).cross(c - a).dot(a + b + c) < 0.0) std::swap(f[1], f[2]);
  }
}

TriMesh make_box(double sx, double sy, double sz) {
  std::vector<Vec3> v(8);
  for (int i = 0; i < 8; ++i)
    v[i] = Vec3((i & 1) ? sx / 2 : -sx / 2, (i & 2) ? sy / 2 : -sy / 2, (i & 4) ? sz / 2 : -sz / 2);
  // two triangles per face, quads listed as corner cycles
  const int quads[6][4] = {{0, 2, 6, 4}, {1, 3, 7, 5}, {0, 1, 5, 4},
                           {2, 3, 7, 6}, {0, 1, 3, 2}, {4, 5, 7, 6}};
  std::vector<Face> f;
  for (const auto& q : quads) {
    f.push_back({q[0], q[1], q[2]});
    f.push_back({q[0], q[2], q[3]});
  }
  TriMesh m(std::move(v), std::move(f));
  orient_outward(m);
  return m;
}

TriMesh make_sphere(double radius, int level) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> ico = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0},
                           {0, -1, t}, {0, 1, t}, {0, -1, -t}, {0, 1, -t},
                           {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (Vec3& p : ico) p.normalize();
  const int ico_faces[20][3] = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                                {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                                {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                                {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  const int n = level <= 0 ? 1 : 3 * (1 << (level - 1));

  std::vector<Vec3> verts = ico;
  std::map<std::tuple<int, int, int>, int> edge_points;  // (lo, hi, step from lo)

  auto vertex_for = [&](int a, int b, int c, int i, int j) -> int {
    // barycentric weights (n-i-j, i, j) on corners (a, b, c)
    const int wa = n - i - j, wb = i, wc = j;
    if (wb == 0 && wc == 0) return a;
    if (wa == 0 && wc == 0) return b;
    if (wa == 0 && wb == 0) return c;
    auto on_edge = [&](int p, int wp, int q, int wq) -> int {
      const int lo = std::min(p, q), hi = std::max(p, q);
      const int step = lo == p ? wq : wp;  // weight of hi = steps from lo
      const auto key = std::make_tuple(lo, hi, step);
      auto it = edge_points.find(key);
      if (it != edge_points.end()) return it->second;
      const Vec3 pos = (ico[lo] * (n - step) + ico[hi] * step) / static_cast<double>(n);
      verts.push_back(pos.normalized());
      edge_points.emplace(key, static_cast<int>(verts.size()) - 1);
      return static_cast<int>(verts.size()) - 1;
    };
    if (wc == 0) return on_edge(a, wa, b, wb);
    if (wb == 0) return on_edge(a, wa, c, wc);
    if (wa == 0) return on_edge(b, wb, c, wc);
    const Vec3 pos = (ico[a] * wa + ico[b] * wb + ico[c] * wc) / static_cast<double>(n);
    verts.push_back(pos.normalized());
    return static_cast<int>(verts.size()) - 1;
  };

  std::vector<Face> faces;
  faces.reserve(static_cast<std::size_t>(20 * n * n));
  for (const auto& f : ico_faces) {
    std::map<std::pair<int, int>, int> grid;
    for (int i = 0; i <= n; ++i)
      for (int j = 0; j <= n - i; ++j) grid[{i, j}] = vertex_for(f[0], f[1], f[2], i, j);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n - i; ++j) {
        faces.push_back({grid[{i, j}], grid[{i + 1, j}], grid[{i, j + 1}]});
        if (i + j < n - 1) faces.push_back({grid[{i + 1, j}], grid[{i + 1, j + 1}], grid[{i, j + 1}]});
      }
  }
  for (Vec3& v : verts) v *= radius;
  TriMesh m(std::move(verts), std::move(faces));
  orient_outward(m);
  return m;
}

TriMesh make_cylinder(double radius, double height, int level) {
  const int segments = 8 * (1 << std::max(level, 0));
  std::vector<Vec3> v;
  v.reserve(static_cast<std::size_t>(2 * segments + 2));
  for (int ring = 0; ring < 2; ++ring) {
    const double z = ring == 0 ? -height / 2 : height / 2;
    for (int s = 0; s < segments; ++s) {
      const double phi = 2.0 * std::numbers::pi * s / segments;
      v.emplace_back(radius * std::cos(phi), radius * std::sin(phi), z);
    }
  }
  const int bottom = static_cast<int>(v.size());
  v.emplace_back(0.0, 0.0, -height / 2);
  const int top = static_cast<int>(v.size());
  v.emplace_back(0.0, 0.0, height / 2);

  std::vector<Face> f;
  for (int s = 0; s < segments; ++s) {
    const int s1 = (s + 1) % segments;
    f.push_back({s, s1, segments + s1});
    f.push_back({s, segments + s1, segments + s});
    f.push_back({bottom, s1, s});
    f.push_back({top, segments + s, segments + s1});
  }
  TriMesh m(std::move(v), std::move(f));
  orient_outward(m);
  return m;
}

}  // namespace

TriMesh make_primitive(const PrimitiveSpec& spec) {
  const auto& d = spec.dimensions;
  auto require = [&](std::size_t count) {
    if (d.size() != count)
      throw InvalidDimensions(to_string(spec.kind) + " needs " + std::to_string(count) +
                              " dimensions, got " + std::to_string(d.size()));
    for (double x : d)
      if (!(x > 0.0) || !std::isfinite(x))
        throw InvalidDimensions(to_string(spec.kind) + " dimensions must be positive");
  };
  if (spec.level < 0 || spec.level > 6) throw InvalidDimensions("tessellation level must be in [0, 6]");
  switch (spec.kind) {
    case PrimitiveKind::Sphere: require(1); return make_sphere(d[0], spec.level);
    case PrimitiveKind::Box: require(3); return make_box(d[0], d[1], d[2]);
    case PrimitiveKind::Cylinder: require(2); return make_cylinder(d[0], d[1], spec.level);
  }
  throw InvalidDimensions("unknown primitive");
}

ObjectKeypoints27 bbox_keypoints_27(const TriMesh& mesh) {
  if (mesh.vertices.empty()) throw EmptyMesh("keypoints of an empty mesh");
  const Aabb box = bounds(mesh);
  ObjectKeypoints27 k;
  k[0] = box.center();
  for (int i = 0; i < 8; ++i)
    k[1 + i] = Vec3((i & 1) ? box.max.x() : box.min.x(), (i & 2) ? box.max.y() : box.min.y(),
                    (i & 4) ? box.max.z() : box.min.z());
  for (int e = 0; e < 12; ++e) k[9 + e] = 0.5 * (k[1 + kBoxEdges[e][0]] + k[1 + kBoxEdges[e][1]]);
  const Vec3 c = k[0];
  for (int axis = 0; axis < 3; ++axis) {
    Vec3 lo = c, hi = c;
    lo[axis] = box.min[axis];
    hi[axis] = box.max[axis];
    k[21 + 2 * axis] = lo;
    k[22 + 2 * axis] = hi;
  }
  return k;
}

// ---------------------------------------------------------------------------
// OBJ

TriMesh parse_obj(const std::string& text, const std::string& source_name) {
  std::vector<Vec3> v;
  std::vector<Face> f;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  auto fail = [&](const std::string& why) {
    throw ParseError(source_name + ":" + std::to_string(line_no) + ": " + why);
  };
  std::vector<std::vector<int>> polygons;
  std::vector<int> polygon_lines;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;
    if (tag == "v") {
      double x, y, z;
      if (!(ls >> x >> y >> z)) fail("malformed vertex record");
      v.emplace_back(x, y, z);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (ls >> tok) {
        const std::string head = tok.substr(0, tok.find('/'));
        std::size_t used = 0;
        int value = 0;
        try {
          value = std::stoi(head, &used);
        } catch (const std::exception&) {
          fail("malformed face entry '" + tok + "'");
        }
        if (used != head.size() || value == 0) fail("malformed face entry '" + tok + "'");
        idx.push_back(value);
      }
      if (idx.size() < 3) fail("face with fewer than 3 vertices");
      polygons.push_back(std::move(idx));
      polygon_lines.push_back(line_no);
    }
  }
  for (std::size_t p = 0; p < polygons.size(); ++p) {
    line_no = polygon_lines[p];
    std::vector<int> resolved;
    for (int value : polygons[p]) {
      const int i = value > 0 ? value - 1 : static_cast<int>(v.size()) + value;
      if (i < 0 || i >= static_cast<int>(v.size())) fail("face index out of range");
      resolved.push_back(i);
    }
    for (std::size_t k = 1; k + 1 < resolved.size(); ++k)
      f.push_back({resolved[0], resolved[k], resolved[k + 1]});
  }
  if (v.empty() || f.empty()) throw EmptyMesh(source_name + " has no vertices or faces");
  return TriMesh(std::move(v), std::move(f));
}

TriMesh load_obj(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_obj(buffer.str(), path.string());
}

void save_obj(const TriMesh& mesh, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << std::setprecision(17);
  for (const Vec3& p : mesh.vertices) out << "v " << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
  for (const Face& f : mesh.faces)
    out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace graspforge

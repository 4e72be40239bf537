// mesh.hpp — triangle meshes, ellipsoid generation, surface sampling, and the
// two graph unpooling schemes (edge-split and face-split).
//
// A Mesh is immutable after Mesh::create: edges and adjacency are derived from
// the face list once, in a canonical order (edges sorted lexicographically with
// lo < hi, neighbor lists ascending), so every downstream consumer — unpooling,
// graph convolutions, losses — sees the same deterministic structure.
#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "meshdeform/geometry.hpp"
#include "meshdeform/rng.hpp"

namespace meshdeform {

struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;          // CCW when viewed from outside
  std::vector<std::pair<int, int>> edges;         // lo < hi, sorted lexicographically
  std::vector<std::vector<int>> adjacency;        // sorted neighbor lists per vertex

  std::size_t vertex_count() const { return vertices.size(); }
  std::size_t edge_count() const { return edges.size(); }
  std::size_t face_count() const { return faces.size(); }

  static Mesh create(std::vector<Vec3> vertices, std::vector<std::array<int, 3>> faces) {
    Mesh m;
    m.vertices = std::move(vertices);
    m.faces = std::move(faces);
    int n = static_cast<int>(m.vertices.size());
    std::set<std::pair<int, int>> edge_set;
    for (std::size_t f = 0; f < m.faces.size(); ++f) {
      const auto& face = m.faces[f];
      for (int k = 0; k < 3; ++k) {
        int a = face[k], b = face[(k + 1) % 3];
        if (a < 0 || a >= n || b < 0 || b >= n)
          throw std::invalid_argument("face " + std::to_string(f) + " references vertex " +
                                      std::to_string(a < 0 || a >= n ? a : b) + " outside [0," +
                                      std::to_string(n) + ")");
        if (a == b)
          throw std::invalid_argument("face " + std::to_string(f) + " repeats vertex " +
                                      std::to_string(a));
        edge_set.emplace(std::min(a, b), std::max(a, b));
      }
    }
    m.edges.assign(edge_set.begin(), edge_set.end());
    m.adjacency.assign(m.vertices.size(), {});
    for (const auto& [a, b] : m.edges) {
      m.adjacency[static_cast<std::size_t>(a)].push_back(b);
      m.adjacency[static_cast<std::size_t>(b)].push_back(a);
    }
    // set iteration already yields ascending neighbors, but make it explicit
    for (auto& nbrs : m.adjacency) std::sort(nbrs.begin(), nbrs.end());
    return m;
  }
};

struct TargetShape {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;

  void validate() const {
    if (points.empty()) throw std::invalid_argument("target shape has no points");
    if (normals.size() != points.size())
      throw std::invalid_argument("target shape: " + std::to_string(points.size()) +
                                  " points vs " + std::to_string(normals.size()) + " normals");
    for (std::size_t i = 0; i < normals.size(); ++i)
      if (std::abs(norm(normals[i]) - 1.0) > 1e-6)
        throw std::invalid_argument("target normal " + std::to_string(i) + " is not unit length");
  }
};

// Sorted, duplicate-free indices of all vertices sharing an edge with `index`.
inline const std::vector<int>& neighbors(const Mesh& mesh, std::size_t index) {
  if (index >= mesh.vertices.size())
    throw std::invalid_argument("vertex index " + std::to_string(index) + " out of range for " +
                                std::to_string(mesh.vertices.size()) + " vertices");
  return mesh.adjacency[index];
}

// δ_p: the vertex minus the arithmetic mean of its neighbors.
inline Vec3 laplacian_coordinate(const Mesh& mesh, std::size_t index) {
  const std::vector<int>& nbrs = neighbors(mesh, index);
  if (nbrs.empty())
    throw std::domain_error("laplacian coordinate of isolated vertex " + std::to_string(index));
  Vec3 mean{0.0, 0.0, 0.0};
  for (int k : nbrs) mean += mesh.vertices[static_cast<std::size_t>(k)];
  return mesh.vertices[index] - mean * (1.0 / static_cast<double>(nbrs.size()));
}

inline std::vector<int> vertex_degrees(const Mesh& mesh) {
  std::vector<int> deg(mesh.vertices.size());
  for (std::size_t i = 0; i < deg.size(); ++i)
    deg[i] = static_cast<int>(mesh.adjacency[i].size());
  return deg;
}

// ---------------------------------------------------------------------------
// Ellipsoid generation
// ---------------------------------------------------------------------------

namespace detail {

// Canonical icosahedron inscribed in the unit sphere.
inline void icosahedron(std::vector<Vec3>& verts, std::vector<std::array<int, 3>>& faces) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  verts = {{-1, t, 0}, {1, t, 0},  {-1, -t, 0}, {1, -t, 0}, {0, -1, t},  {0, 1, t},
           {0, -1, -t}, {0, 1, -t}, {t, 0, -1},  {t, 0, 1},  {-t, 0, -1}, {-t, 0, 1}};
  for (Vec3& v : verts) v = normalized(v);
  faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9},
           {5, 11, 4}, {11, 10, 2}, {10, 7, 6},  {7, 1, 8},  {3, 9, 4},   {3, 4, 2},
           {3, 2, 6},  {3, 6, 8},  {3, 8, 9},   {4, 9, 5},  {2, 4, 11},  {6, 2, 10},
           {8, 6, 7},  {9, 8, 1}};
}

// One midpoint-subdivision pass over a unit-sphere triangulation.
inline void subdivide_sphere(std::vector<Vec3>& verts, std::vector<std::array<int, 3>>& faces) {
  std::map<std::pair<int, int>, int> midpoint;
  auto mid = [&](int a, int b) {
    auto key = std::minmax(a, b);
    auto it = midpoint.find(key);
    if (it != midpoint.end()) return it->second;
    int idx = static_cast<int>(verts.size());
    verts.push_back(normalized((verts[static_cast<std::size_t>(a)] +
                                verts[static_cast<std::size_t>(b)]) * 0.5));
    midpoint.emplace(key, idx);
    return idx;
  };
  std::vector<std::array<int, 3>> next;
  next.reserve(faces.size() * 4);
  for (const auto& f : faces) {
    int ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
    next.push_back({f[0], ab, ca});
    next.push_back({f[1], bc, ab});
    next.push_back({f[2], ca, bc});
    next.push_back({ab, bc, ca});
  }
  faces = std::move(next);
}

}  // namespace detail

// Icosphere scaled anisotropically: V = 10·4^level + 2 (12, 42, 162, 642, ...).
inline Mesh make_ellipsoid(Vec3 radii, Vec3 center, int subdivision_level = 2) {
  if (radii.x <= 0.0 || radii.y <= 0.0 || radii.z <= 0.0)
    throw std::invalid_argument("ellipsoid radii must be positive, got (" +
                                std::to_string(radii.x) + ", " + std::to_string(radii.y) + ", " +
                                std::to_string(radii.z) + ")");
  if (subdivision_level < 0)
    throw std::invalid_argument("subdivision level must be >= 0, got " +
                                std::to_string(subdivision_level));
  std::vector<Vec3> verts;
  std::vector<std::array<int, 3>> faces;
  detail::icosahedron(verts, faces);
  for (int i = 0; i < subdivision_level; ++i) detail::subdivide_sphere(verts, faces);
  for (Vec3& v : verts)
    v = {v.x * radii.x + center.x, v.y * radii.y + center.y, v.z * radii.z + center.z};
  return Mesh::create(std::move(verts), std::move(faces));
}

// The canonical coarse mesh: exactly V=156, E=462, F=308. No pure subdivision
// scheme hits those counts, so this starts from the level-2 icosphere
// (V=162, E=480, F=320) and applies six independent edge collapses; each
// removes one vertex, three edges and two faces. Collapses are chosen greedily
// in edge order with pairwise-disjoint 1-rings, so they cannot interact, and
// the merged vertex is re-projected onto the sphere before scaling.
inline Mesh make_ellipsoid_156(Vec3 radii = {0.2, 0.2, 0.4}, Vec3 center = {0.0, 0.0, 0.8}) {
  if (radii.x <= 0.0 || radii.y <= 0.0 || radii.z <= 0.0)
    throw std::invalid_argument("ellipsoid radii must be positive");
  std::vector<Vec3> verts;
  std::vector<std::array<int, 3>> faces;
  detail::icosahedron(verts, faces);
  detail::subdivide_sphere(verts, faces);
  detail::subdivide_sphere(verts, faces);

  Mesh sphere = Mesh::create(verts, faces);
  std::vector<std::pair<int, int>> collapses;
  std::set<int> used;
  for (const auto& [u, v] : sphere.edges) {
    if (collapses.size() == 6) break;
    // Link condition: u and v must share exactly the two face-opposite vertices.
    std::vector<int> common;
    std::set_intersection(sphere.adjacency[static_cast<std::size_t>(u)].begin(),
                          sphere.adjacency[static_cast<std::size_t>(u)].end(),
                          sphere.adjacency[static_cast<std::size_t>(v)].begin(),
                          sphere.adjacency[static_cast<std::size_t>(v)].end(),
                          std::back_inserter(common));
    if (common.size() != 2) continue;
    std::set<int> ring{u, v};
    for (int k : sphere.adjacency[static_cast<std::size_t>(u)]) ring.insert(k);
    for (int k : sphere.adjacency[static_cast<std::size_t>(v)]) ring.insert(k);
    bool clean = true;
    for (int k : ring) clean = clean && !used.count(k);
    if (!clean) continue;
    used.insert(ring.begin(), ring.end());
    collapses.emplace_back(u, v);
  }
  if (collapses.size() != 6)
    throw std::logic_error("ellipsoid fixture construction found only " +
                           std::to_string(collapses.size()) + " independent collapses");

  // Merge v into u: u takes the sphere midpoint, faces referencing v re-point
  // to u, the two faces containing both endpoints degenerate and are dropped.
  std::vector<int> remap(verts.size());
  for (std::size_t i = 0; i < remap.size(); ++i) remap[i] = static_cast<int>(i);
  for (const auto& [u, v] : collapses) {
    verts[static_cast<std::size_t>(u)] =
        normalized((verts[static_cast<std::size_t>(u)] + verts[static_cast<std::size_t>(v)]) * 0.5);
    remap[static_cast<std::size_t>(v)] = u;
  }
  std::vector<Vec3> out_verts;
  std::vector<int> compact(verts.size(), -1);
  for (std::size_t i = 0; i < verts.size(); ++i) {
    if (remap[i] != static_cast<int>(i)) continue;
    compact[i] = static_cast<int>(out_verts.size());
    out_verts.push_back(verts[i]);
  }
  std::vector<std::array<int, 3>> out_faces;
  out_faces.reserve(faces.size());
  for (const auto& f : faces) {
    std::array<int, 3> g;
    for (int k = 0; k < 3; ++k) g[static_cast<std::size_t>(k)] =
        compact[static_cast<std::size_t>(remap[static_cast<std::size_t>(f[static_cast<std::size_t>(k)])])];
    if (g[0] == g[1] || g[1] == g[2] || g[2] == g[0]) continue;
    out_faces.push_back(g);
  }
  for (Vec3& v : out_verts)
    v = {v.x * radii.x + center.x, v.y * radii.y + center.y, v.z * radii.z + center.z};
  return Mesh::create(std::move(out_verts), std::move(out_faces));
}

// ---------------------------------------------------------------------------
// Surface sampling
// ---------------------------------------------------------------------------

// Area-weighted, per-face barycentric-uniform samples with face normals.
// Degenerate (zero-area) faces carry zero weight and are never drawn.
inline std::vector<std::pair<Vec3, Vec3>> sample_surface(const Mesh& mesh, std::size_t count,
                                                         std::uint64_t seed) {
  if (mesh.faces.empty()) throw std::domain_error("cannot sample a mesh with no faces");
  std::vector<double> cumulative(mesh.faces.size());
  double total = 0.0;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const auto& face = mesh.faces[f];
    total += triangle_area(mesh.vertices[static_cast<std::size_t>(face[0])],
                           mesh.vertices[static_cast<std::size_t>(face[1])],
                           mesh.vertices[static_cast<std::size_t>(face[2])]);
    cumulative[f] = total;
  }
  if (total <= 0.0) throw std::domain_error("cannot sample a mesh with zero total area");

  Rng rng(seed);
  std::vector<std::pair<Vec3, Vec3>> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    double pick = rng.uniform() * total;
    std::size_t f = static_cast<std::size_t>(
        std::lower_bound(cumulative.begin(), cumulative.end(), pick) - cumulative.begin());
    if (f >= mesh.faces.size()) f = mesh.faces.size() - 1;
    const auto& face = mesh.faces[f];
    const Vec3& a = mesh.vertices[static_cast<std::size_t>(face[0])];
    const Vec3& b = mesh.vertices[static_cast<std::size_t>(face[1])];
    const Vec3& c = mesh.vertices[static_cast<std::size_t>(face[2])];
    double r1 = rng.uniform(), r2 = rng.uniform();
    if (r1 + r2 > 1.0) {
      r1 = 1.0 - r1;
      r2 = 1.0 - r2;
    }
    Vec3 p = a + (b - a) * r1 + (c - a) * r2;
    out.emplace_back(p, triangle_normal(a, b, c));
  }
  return out;
}

inline TargetShape sample_surface_target(const Mesh& mesh, std::size_t count, std::uint64_t seed) {
  TargetShape t;
  auto samples = sample_surface(mesh, count, seed);
  t.points.reserve(samples.size());
  t.normals.reserve(samples.size());
  for (const auto& [p, n] : samples) {
    t.points.push_back(p);
    t.normals.push_back(n);
  }
  return t;
}

// ---------------------------------------------------------------------------
// Graph unpooling
// ---------------------------------------------------------------------------

// Edge-based unpooling: a midpoint vertex per edge, each face split into four.
// New vertex V+k is the midpoint of input edge k, so the input's edge list
// doubles as the feature-interpolation plan. V'=V+E, E'=2E+3F, F'=4F.
inline Mesh unpool_edge(const Mesh& mesh) {
  std::vector<Vec3> verts = mesh.vertices;
  verts.reserve(mesh.vertices.size() + mesh.edges.size());
  std::map<std::pair<int, int>, int> edge_vertex;
  for (const auto& e : mesh.edges) {
    edge_vertex[e] = static_cast<int>(verts.size());
    verts.push_back((mesh.vertices[static_cast<std::size_t>(e.first)] +
                     mesh.vertices[static_cast<std::size_t>(e.second)]) * 0.5);
  }
  auto mid = [&edge_vertex](int a, int b) {
    return edge_vertex.at(std::minmax(a, b));
  };
  std::vector<std::array<int, 3>> faces;
  faces.reserve(mesh.faces.size() * 4);
  for (const auto& f : mesh.faces) {
    int ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
    faces.push_back({f[0], ab, ca});
    faces.push_back({f[1], bc, ab});
    faces.push_back({f[2], ca, bc});
    faces.push_back({ab, bc, ca});
  }
  return Mesh::create(std::move(verts), std::move(faces));
}

// Face-based unpooling: a centroid vertex per face joined to its corners.
// Kept for the degree-balance comparison against unpool_edge; V'=V+F, E'=E+3F,
// F'=3F, and original vertices double their degree while centroids stay at 3.
inline Mesh unpool_face(const Mesh& mesh) {
  std::vector<Vec3> verts = mesh.vertices;
  verts.reserve(mesh.vertices.size() + mesh.faces.size());
  std::vector<std::array<int, 3>> faces;
  faces.reserve(mesh.faces.size() * 3);
  for (const auto& f : mesh.faces) {
    int centroid = static_cast<int>(verts.size());
    verts.push_back((mesh.vertices[static_cast<std::size_t>(f[0])] +
                     mesh.vertices[static_cast<std::size_t>(f[1])] +
                     mesh.vertices[static_cast<std::size_t>(f[2])]) * (1.0 / 3.0));
    faces.push_back({f[0], f[1], centroid});
    faces.push_back({f[1], f[2], centroid});
    faces.push_back({f[2], f[0], centroid});
  }
  return Mesh::create(std::move(verts), std::move(faces));
}

// Axis-aligned box as a 12-triangle closed mesh (CCW from outside).
inline Mesh make_box_mesh(Vec3 center, Vec3 half_extent) {
  if (half_extent.x <= 0.0 || half_extent.y <= 0.0 || half_extent.z <= 0.0)
    throw std::invalid_argument("box half extents must be positive");
  std::vector<Vec3> verts(8);
  for (int i = 0; i < 8; ++i)
    verts[static_cast<std::size_t>(i)] = {center.x + ((i & 1) ? half_extent.x : -half_extent.x),
                                          center.y + ((i & 2) ? half_extent.y : -half_extent.y),
                                          center.z + ((i & 4) ? half_extent.z : -half_extent.z)};
  std::vector<std::array<int, 3>> faces = {{0, 2, 3}, {0, 3, 1}, {4, 5, 7}, {4, 7, 6},
                                           {0, 1, 5}, {0, 5, 4}, {2, 6, 7}, {2, 7, 3},
                                           {0, 4, 6}, {0, 6, 2}, {1, 3, 7}, {1, 7, 5}};
  return Mesh::create(std::move(verts), std::move(faces));
}

// Spot check: draws `pair_samples` random face pairs and counts proper
// intersections, skipping pairs that share a vertex (adjacent faces touch
// legitimately). Zero on a clean embedding.
inline std::size_t count_self_intersections(const Mesh& mesh, std::size_t pair_samples,
                                            std::uint64_t seed) {
  if (mesh.faces.size() < 2) return 0;
  Rng rng(seed);
  std::size_t bad = 0;
  for (std::size_t i = 0; i < pair_samples; ++i) {
    std::size_t f1 = static_cast<std::size_t>(rng.below(mesh.faces.size()));
    std::size_t f2 = static_cast<std::size_t>(rng.below(mesh.faces.size()));
    if (f1 == f2) continue;
    const auto& a = mesh.faces[f1];
    const auto& b = mesh.faces[f2];
    bool shared = false;
    for (int u : a)
      for (int v : b) shared = shared || (u == v);
    if (shared) continue;
    if (triangles_intersect(mesh.vertices[static_cast<std::size_t>(a[0])],
                            mesh.vertices[static_cast<std::size_t>(a[1])],
                            mesh.vertices[static_cast<std::size_t>(a[2])],
                            mesh.vertices[static_cast<std::size_t>(b[0])],
                            mesh.vertices[static_cast<std::size_t>(b[1])],
                            mesh.vertices[static_cast<std::size_t>(b[2])]))
      ++bad;
  }
  return bad;
}

// Checks closed-surface bookkeeping: V−E+F=2 and 3F=2E.
inline void check_closed_topology(const Mesh& mesh, const std::string& label) {
  long long v = static_cast<long long>(mesh.vertex_count());
  long long e = static_cast<long long>(mesh.edge_count());
  long long f = static_cast<long long>(mesh.face_count());
  if (v - e + f != 2)
    throw std::domain_error(label + ": Euler characteristic V-E+F = " + std::to_string(v - e + f) +
                            ", expected 2");
  if (3 * f != 2 * e)
    throw std::domain_error(label + ": 3F=" + std::to_string(3 * f) + " but 2E=" +
                            std::to_string(2 * e));
}

}  // namespace meshdeform

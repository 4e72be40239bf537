// dataset.hpp — example manifests and synthetic target generation. The
// shipped dataset is fully synthetic (geometric primitives plus procedural
// feature images): every training/eval example is a (image-or-pyramid,
// intrinsics, target point cloud) triple in camera coordinates.
#pragma once

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "meshdeform/geometry.hpp"
#include "meshdeform/io.hpp"
#include "meshdeform/mesh.hpp"
#include "meshdeform/rng.hpp"

namespace meshdeform {

struct Example {
  std::string id;
  std::string image_path;     // text grid or PNG; empty if a pyramid is given
  std::string pyramid_path;   // precomputed pyramid; empty if an image is given
  std::string intrinsics_path;
  std::string target_path;    // x y z nx ny nz point cloud
};

struct Manifest {
  std::string split;  // train or test
  std::vector<Example> examples;
};

// Paths inside a manifest are resolved relative to the manifest file itself.
inline Manifest load_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open manifest: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("manifest " + path + ": " + e.what());
  }
  Manifest m;
  m.split = j.value("split", "train");
  const auto& examples = j.at("examples");
  if (!examples.is_array() || examples.empty())
    throw std::runtime_error("manifest " + path + ": examples list is empty");

  std::filesystem::path base = std::filesystem::path(path).parent_path();
  auto resolve = [&base](const std::string& p) {
    if (p.empty()) return p;
    std::filesystem::path fp(p);
    return fp.is_absolute() ? fp.string() : (base / fp).string();
  };

  for (std::size_t idx = 0; idx < examples.size(); ++idx) {
    const auto& rec = examples[idx];
    Example e;
    try {
      e.id = rec.at("id").get<std::string>();
      e.image_path = resolve(rec.value("image", ""));
      e.pyramid_path = resolve(rec.value("pyramid", ""));
      e.intrinsics_path = resolve(rec.at("intrinsics").get<std::string>());
      e.target_path = resolve(rec.at("target").get<std::string>());
    } catch (const nlohmann::json::exception& ex) {
      throw std::runtime_error("manifest " + path + ": example " + std::to_string(idx) + ": " +
                               ex.what());
    }
    if (e.image_path.empty() == e.pyramid_path.empty())
      throw std::runtime_error("manifest " + path + ": example " + std::to_string(idx) +
                               " ('" + e.id + "') needs exactly one of image/pyramid");
    for (const std::string& f : {e.image_path, e.pyramid_path, e.intrinsics_path, e.target_path})
      if (!f.empty() && !std::filesystem::exists(f))
        throw std::runtime_error("manifest " + path + ": example '" + e.id +
                                 "' references missing file " + f);
    for (std::size_t prev = 0; prev < m.examples.size(); ++prev)
      if (m.examples[prev].id == e.id)
        throw std::runtime_error("manifest " + path + ": duplicate id '" + e.id +
                                 "' at indices " + std::to_string(prev) + " and " +
                                 std::to_string(idx));
    m.examples.push_back(std::move(e));
  }
  return m;
}

// ---------------------------------------------------------------------------
// Synthetic targets: area-weighted surface samples with analytic normals
// ---------------------------------------------------------------------------

struct CubeParams {
  Vec3 center{0.0, 0.0, 0.8};
  Vec3 half_extent{0.15, 0.15, 0.15};
};

inline TargetShape make_cube_target(const CubeParams& p, std::size_t count, std::uint64_t seed) {
  if (p.half_extent.x <= 0.0 || p.half_extent.y <= 0.0 || p.half_extent.z <= 0.0)
    throw std::invalid_argument("cube half extents must be positive");
  // Six faces; one per axis direction, area = 4 * product of the other extents.
  struct Face {
    int axis;
    double sign;
    double area;
  };
  double ax = 4.0 * p.half_extent.y * p.half_extent.z;
  double ay = 4.0 * p.half_extent.x * p.half_extent.z;
  double az = 4.0 * p.half_extent.x * p.half_extent.y;
  Face faces[6] = {{0, 1.0, ax}, {0, -1.0, ax}, {1, 1.0, ay},
                   {1, -1.0, ay}, {2, 1.0, az}, {2, -1.0, az}};
  double total = 2.0 * (ax + ay + az);
  Rng rng(seed);
  TargetShape t;
  t.points.reserve(count);
  t.normals.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    double pick = rng.uniform() * total;
    int f = 0;
    double run = 0.0;
    for (int k = 0; k < 6; ++k) {
      run += faces[k].area;
      if (pick <= run || k == 5) {
        f = k;
        break;
      }
    }
    const Face& face = faces[f];
    Vec3 q = p.center;
    Vec3 n{0.0, 0.0, 0.0};
    n[static_cast<std::size_t>(face.axis)] = face.sign;
    q[static_cast<std::size_t>(face.axis)] += face.sign * p.half_extent[static_cast<std::size_t>(face.axis)];
    int u_axis = (face.axis + 1) % 3, v_axis = (face.axis + 2) % 3;
    q[static_cast<std::size_t>(u_axis)] += rng.uniform(-1.0, 1.0) * p.half_extent[static_cast<std::size_t>(u_axis)];
    q[static_cast<std::size_t>(v_axis)] += rng.uniform(-1.0, 1.0) * p.half_extent[static_cast<std::size_t>(v_axis)];
    t.points.push_back(q);
    t.normals.push_back(n);
  }
  return t;
}

struct CylinderParams {
  Vec3 center{0.0, 0.0, 0.8};
  double radius = 0.15;
  double height = 0.3;  // along z
};

inline TargetShape make_cylinder_target(const CylinderParams& p, std::size_t count,
                                        std::uint64_t seed) {
  if (p.radius <= 0.0 || p.height <= 0.0)
    throw std::invalid_argument("cylinder radius and height must be positive");
  const double pi = 3.14159265358979323846;
  double side = 2.0 * pi * p.radius * p.height;
  double cap = pi * p.radius * p.radius;
  double total = side + 2.0 * cap;
  Rng rng(seed);
  TargetShape t;
  t.points.reserve(count);
  t.normals.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    double pick = rng.uniform() * total;
    double theta = rng.uniform(0.0, 2.0 * pi);
    if (pick < side) {
      double z = rng.uniform(-0.5, 0.5) * p.height;
      Vec3 n{std::cos(theta), std::sin(theta), 0.0};
      t.points.push_back(p.center + Vec3{p.radius * n.x, p.radius * n.y, z});
      t.normals.push_back(n);
    } else {
      double sign = pick < side + cap ? 1.0 : -1.0;
      double r = p.radius * std::sqrt(rng.uniform());
      t.points.push_back(p.center + Vec3{r * std::cos(theta), r * std::sin(theta),
                                         sign * 0.5 * p.height});
      t.normals.push_back({0.0, 0.0, sign});
    }
  }
  return t;
}

struct EllipsoidParams {
  Vec3 center{0.0, 0.0, 0.8};
  Vec3 radii{0.2, 0.2, 0.4};
};

// Area-uniform via rejection: a direction u on the unit sphere maps to the
// ellipsoid with local area stretch sqrt((bc·u_x)² + (ac·u_y)² + (ab·u_z)²),
// so accepting with probability stretch/stretch_max makes samples uniform in
// surface area. Normals follow the implicit-surface gradient.
inline TargetShape make_ellipsoid_target(const EllipsoidParams& p, std::size_t count,
                                         std::uint64_t seed) {
  if (p.radii.x <= 0.0 || p.radii.y <= 0.0 || p.radii.z <= 0.0)
    throw std::invalid_argument("ellipsoid radii must be positive");
  double a = p.radii.x, b = p.radii.y, c = p.radii.z;
  double stretch_max = std::max(b * c, std::max(a * c, a * b));
  Rng rng(seed);
  TargetShape t;
  t.points.reserve(count);
  t.normals.reserve(count);
  while (t.points.size() < count) {
    Vec3 u{rng.normal(), rng.normal(), rng.normal()};
    double len = norm(u);
    if (len < 1e-12) continue;
    u = u * (1.0 / len);
    double stretch = std::sqrt(b * c * u.x * (b * c * u.x) + a * c * u.y * (a * c * u.y) +
                               a * b * u.z * (a * b * u.z));
    if (rng.uniform() * stretch_max > stretch) continue;
    Vec3 q = p.center + Vec3{a * u.x, b * u.y, c * u.z};
    t.points.push_back(q);
    t.normals.push_back(normalized({u.x / a, u.y / b, u.z / c}));
  }
  return t;
}

// Dispatcher used by fixture generation and tests.
inline TargetShape make_synthetic_target(const std::string& shape, const nlohmann::json& params,
                                         std::size_t count, std::uint64_t seed) {
  auto vec3_of = [&params](const char* key, Vec3 fallback) {
    if (!params.contains(key)) return fallback;
    const auto& arr = params.at(key);
    return Vec3{arr.at(0).get<double>(), arr.at(1).get<double>(), arr.at(2).get<double>()};
  };
  if (shape == "cube") {
    CubeParams p;
    p.center = vec3_of("center", p.center);
    p.half_extent = vec3_of("half_extent", p.half_extent);
    return make_cube_target(p, count, seed);
  }
  if (shape == "cylinder") {
    CylinderParams p;
    p.center = vec3_of("center", p.center);
    p.radius = params.value("radius", p.radius);
    p.height = params.value("height", p.height);
    return make_cylinder_target(p, count, seed);
  }
  if (shape == "ellipsoid") {
    EllipsoidParams p;
    p.center = vec3_of("center", p.center);
    p.radii = vec3_of("radii", p.radii);
    return make_ellipsoid_target(p, count, seed);
  }
  throw std::invalid_argument("unknown synthetic shape '" + shape +
                              "' (expected cube, cylinder or ellipsoid)");
}

// Procedural RGB test image: smooth sinusoid mixture so pyramid features vary
// spatially but reproduce bit-exactly from (size, seed).
inline ImageGrid make_procedural_image(std::size_t height, std::size_t width, std::uint64_t seed) {
  Rng rng(seed);
  double fx[3], fy[3], phase[3];
  for (int ch = 0; ch < 3; ++ch) {
    fx[ch] = rng.uniform(1.0, 4.0);
    fy[ch] = rng.uniform(1.0, 4.0);
    phase[ch] = rng.uniform(0.0, 6.28318530717958648);
  }
  ImageGrid img;
  img.height = height;
  img.width = width;
  img.data.resize(height * width * 3);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x)
      for (std::size_t ch = 0; ch < 3; ++ch) {
        double u = static_cast<double>(x) / static_cast<double>(width);
        double v = static_cast<double>(y) / static_cast<double>(height);
        img.data[(y * width + x) * 3 + ch] =
            0.5 + 0.5 * std::sin(fx[ch] * 6.28318530717958648 * u +
                                 fy[ch] * 6.28318530717958648 * v + phase[ch]);
      }
  return img;
}

}  // namespace meshdeform

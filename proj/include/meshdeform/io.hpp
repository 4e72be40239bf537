// io.hpp — text file formats: Wavefront OBJ meshes, `x y z nx ny nz` point
// clouds, and raw float image grids. Writers emit 17 significant digits so a
// write/read round trip reproduces doubles exactly; readers reject malformed
// input with the offending line number rather than repairing it.
#pragma once

#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "meshdeform/mesh.hpp"

namespace meshdeform {

namespace detail {

inline std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::runtime_error parse_error(const std::string& path, std::size_t line,
                                      const std::string& what) {
  return std::runtime_error(path + ":" + std::to_string(line) + ": " + what);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Wavefront OBJ (triangles only; `v` and `f` records, 1-indexed faces)
// ---------------------------------------------------------------------------

inline void write_obj(const Mesh& mesh, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  for (const Vec3& v : mesh.vertices)
    os << "v " << detail::format_g17(v.x) << ' ' << detail::format_g17(v.y) << ' '
       << detail::format_g17(v.z) << '\n';
  for (const auto& f : mesh.faces)
    os << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
  if (!os) throw std::runtime_error("write failure: " + path);
}

inline Mesh read_obj(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open: " + path);
  std::vector<Vec3> verts;
  std::vector<std::array<int, 3>> faces;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "v") {
      Vec3 v;
      if (!(ls >> v.x >> v.y >> v.z))
        throw detail::parse_error(path, line_no, "malformed vertex record");
      verts.push_back(v);
    } else if (tag == "f") {
      std::vector<long> idx;
      std::string tok;
      while (ls >> tok) {
        // accept `f v`, `f v/vt`, `f v/vt/vn` but use only the vertex index
        std::size_t slash = tok.find('/');
        std::string head = slash == std::string::npos ? tok : tok.substr(0, slash);
        try {
          idx.push_back(std::stol(head));
        } catch (const std::exception&) {
          throw detail::parse_error(path, line_no, "malformed face index '" + tok + "'");
        }
      }
      if (idx.size() != 3)
        throw detail::parse_error(path, line_no, "face has " + std::to_string(idx.size()) +
                                                     " vertices; only triangles are supported");
      std::array<int, 3> f;
      for (int k = 0; k < 3; ++k) {
        long v = idx[static_cast<std::size_t>(k)];
        if (v < 0) v = static_cast<long>(verts.size()) + v + 1;  // OBJ negative = relative
        if (v < 1 || v > static_cast<long>(verts.size()))
          throw detail::parse_error(path, line_no, "face index " + std::to_string(v) +
                                                       " out of range");
        f[static_cast<std::size_t>(k)] = static_cast<int>(v - 1);
      }
      faces.push_back(f);
    }
    // other records (vn, vt, o, g, s, usemtl, mtllib) are ignored
  }
  return Mesh::create(std::move(verts), std::move(faces));
}

// ---------------------------------------------------------------------------
// Point clouds with normals: one `x y z nx ny nz` line per point
// ---------------------------------------------------------------------------

inline void write_point_cloud(const TargetShape& target, const std::string& path) {
  if (target.points.size() != target.normals.size())
    throw std::invalid_argument("point cloud has " + std::to_string(target.points.size()) +
                                " points vs " + std::to_string(target.normals.size()) + " normals");
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  for (std::size_t i = 0; i < target.points.size(); ++i) {
    const Vec3& p = target.points[i];
    const Vec3& n = target.normals[i];
    os << detail::format_g17(p.x) << ' ' << detail::format_g17(p.y) << ' '
       << detail::format_g17(p.z) << ' ' << detail::format_g17(n.x) << ' '
       << detail::format_g17(n.y) << ' ' << detail::format_g17(n.z) << '\n';
  }
  if (!os) throw std::runtime_error("write failure: " + path);
}

inline TargetShape read_point_cloud(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open: " + path);
  TargetShape t;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    Vec3 p, n;
    if (!(ls >> p.x >> p.y >> p.z >> n.x >> n.y >> n.z))
      throw detail::parse_error(path, line_no, "expected 6 numbers: x y z nx ny nz");
    std::string extra;
    if (ls >> extra)
      throw detail::parse_error(path, line_no, "trailing content '" + extra + "'");
    t.points.push_back(p);
    t.normals.push_back(n);
  }
  t.validate();
  return t;
}

// ---------------------------------------------------------------------------
// Raw image grid: header `H W 3`, then H·W·3 floats row-major (RGB per pixel)
// ---------------------------------------------------------------------------

struct ImageGrid {
  std::size_t height = 0, width = 0;
  std::vector<double> data;  // height*width*3, row-major, channel-minor

  double at(std::size_t y, std::size_t x, std::size_t c) const {
    return data[(y * width + x) * 3 + c];
  }
};

inline void write_image_grid(const ImageGrid& img, const std::string& path) {
  if (img.data.size() != img.height * img.width * 3)
    throw std::invalid_argument("image grid data size mismatch");
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << img.height << ' ' << img.width << " 3\n";
  for (std::size_t i = 0; i < img.data.size(); ++i)
    os << detail::format_g17(img.data[i]) << (i % 3 == 2 ? '\n' : ' ');
  if (!os) throw std::runtime_error("write failure: " + path);
}

inline ImageGrid read_image_grid(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open: " + path);
  ImageGrid img;
  std::size_t channels = 0;
  if (!(is >> img.height >> img.width >> channels) || channels != 3)
    throw detail::parse_error(path, 1, "expected header 'H W 3'");
  img.data.resize(img.height * img.width * 3);
  for (std::size_t i = 0; i < img.data.size(); ++i)
    if (!(is >> img.data[i]))
      throw std::runtime_error(path + ": truncated image grid (read " + std::to_string(i) +
                               " of " + std::to_string(img.data.size()) + " values)");
  return img;
}

}  // namespace meshdeform

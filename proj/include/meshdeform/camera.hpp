// camera.hpp — pinhole intrinsics and perspective projection, in plain and
// differentiable (tensor) forms. All geometry lives in the camera frame, so
// there are no extrinsics anywhere in the pipeline.
#pragma once

#include <cstddef>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "meshdeform/geometry.hpp"
#include "meshdeform/tensor.hpp"

namespace meshdeform {

struct CameraIntrinsics {
  double f_x = 0.0, f_y = 0.0;  // focal lengths, pixels
  double c_x = 0.0, c_y = 0.0;  // principal point, pixels
  std::size_t width = 0, height = 0;

  void validate() const {
    if (f_x <= 0.0 || f_y <= 0.0)
      throw std::invalid_argument("focal lengths must be positive, got f_x=" +
                                  std::to_string(f_x) + " f_y=" + std::to_string(f_y));
    if (width == 0 || height == 0)
      throw std::invalid_argument("image size must be positive, got " + std::to_string(width) +
                                  "x" + std::to_string(height));
  }
};

inline void write_intrinsics(const CameraIntrinsics& k, const std::string& path) {
  nlohmann::json j{{"f_x", k.f_x}, {"f_y", k.f_y}, {"c_x", k.c_x},
                   {"c_y", k.c_y}, {"width", k.width}, {"height", k.height}};
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << j.dump(2) << '\n';
}

inline CameraIntrinsics read_intrinsics(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open: " + path);
  nlohmann::json j = nlohmann::json::parse(is);
  CameraIntrinsics k;
  k.f_x = j.at("f_x").get<double>();
  k.f_y = j.at("f_y").get<double>();
  k.c_x = j.at("c_x").get<double>();
  k.c_y = j.at("c_y").get<double>();
  k.width = j.at("width").get<std::size_t>();
  k.height = j.at("height").get<std::size_t>();
  k.validate();
  return k;
}

// Depth floor: points at or behind the image plane project as if at this
// depth (with a zero depth-gradient), keeping training finite instead of
// crashing on a transient bad vertex.
inline constexpr double kProjectionEpsZ = 1e-6;

struct Pixel {
  double x = 0.0, y = 0.0;
};

// (x, y) = (X/Z·f_x + c_x, Y/Z·f_y + c_y). `clamped`, when given, is
// incremented if the depth hit the floor.
inline Pixel project(const Vec3& p, const CameraIntrinsics& k, std::size_t* clamped = nullptr) {
  double z = p.z;
  if (z < kProjectionEpsZ) {
    z = kProjectionEpsZ;
    if (clamped) ++*clamped;
  }
  return {p.x / z * k.f_x + k.c_x, p.y / z * k.f_y + k.c_y};
}

// Differentiable batch projection: (N x 3) positions -> (N x 2) pixels.
// Where the depth floor engages, the partials w.r.t. Z are zero (the clamp is
// flat there); X/Y partials use the floored depth.
inline Tensor project_points(const Tensor& positions, const CameraIntrinsics& k,
                             std::size_t* clamped = nullptr) {
  if (positions.shape().size() != 2 || positions.cols() != 3)
    throw std::invalid_argument("project_points expects Nx3 positions, got " +
                                shape_str(positions.shape()));
  std::size_t n = positions.rows();
  std::vector<double> out(n * 2);
  auto flags = std::make_shared<std::vector<char>>(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    double x = positions.at(i, 0), y = positions.at(i, 1), z = positions.at(i, 2);
    if (z < kProjectionEpsZ) {
      z = kProjectionEpsZ;
      (*flags)[i] = 1;
      if (clamped) ++*clamped;
    }
    out[i * 2 + 0] = x / z * k.f_x + k.c_x;
    out[i * 2 + 1] = y / z * k.f_y + k.c_y;
  }
  return make_op_result({n, 2}, std::move(out), {positions},
                        [positions, k, flags, n](detail::TensorNode& self) {
    if (!positions.requires_grad()) return;
    positions.node()->ensure_grad();
    for (std::size_t i = 0; i < n; ++i) {
      double x = positions.at(i, 0), y = positions.at(i, 1), z = positions.at(i, 2);
      bool hit_floor = (*flags)[i] != 0;
      if (hit_floor) z = kProjectionEpsZ;
      double gu = self.grad[i * 2 + 0], gv = self.grad[i * 2 + 1];
      positions.node()->grad[i * 3 + 0] += gu * k.f_x / z;
      positions.node()->grad[i * 3 + 1] += gv * k.f_y / z;
      if (!hit_floor)
        positions.node()->grad[i * 3 + 2] +=
            -(gu * x * k.f_x + gv * y * k.f_y) / (z * z);
    }
  });
}

}  // namespace meshdeform

// geometry.hpp — small 3D vector/triangle toolkit shared across the library.
//
// Conventions:
// - Double precision everywhere; lengths are meters in the camera frame.
// - Triangles are CCW when viewed from outside; normals follow the right-hand
//   rule of that winding.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>

namespace meshdeform {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  double& operator[](std::size_t i) { return i == 0 ? x : (i == 1 ? y : z); }
  double operator[](std::size_t i) const { return i == 0 ? x : (i == 1 ? y : z); }

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
  Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
  Vec3& operator-=(const Vec3& o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
  bool operator==(const Vec3& o) const { return x == o.x && y == o.y && z == o.z; }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

inline double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

inline double norm_sq(const Vec3& v) { return dot(v, v); }
inline double norm(const Vec3& v) { return std::sqrt(norm_sq(v)); }

inline Vec3 normalized(const Vec3& v) {
  double n = norm(v);
  return n > 0.0 ? v / n : Vec3{0.0, 0.0, 0.0};
}

inline double sq_dist(const Vec3& a, const Vec3& b) { return norm_sq(a - b); }

inline double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) {
  return 0.5 * norm(cross(b - a, c - a));
}

// Unit normal of a CCW triangle. Degenerate (zero-area) triangles fall back to
// +z; callers that care can test with triangle_area first.
inline Vec3 triangle_normal(const Vec3& a, const Vec3& b, const Vec3& c) {
  Vec3 n = cross(b - a, c - a);
  double len = norm(n);
  if (len == 0.0) return {0.0, 0.0, 1.0};
  return n / len;
}

// 3x3 rotation, row-major. Used by invariance tests and rigid transforms.
struct Mat3 {
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

  Vec3 operator*(const Vec3& v) const {
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
            m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z};
  }
};

// Rotation about a unit axis by angle (Rodrigues).
inline Mat3 axis_angle_rotation(const Vec3& axis_in, double angle) {
  Vec3 u = normalized(axis_in);
  double c = std::cos(angle), s = std::sin(angle), t = 1.0 - c;
  Mat3 r;
  r.m = {c + u.x * u.x * t,       u.x * u.y * t - u.z * s, u.x * u.z * t + u.y * s,
         u.y * u.x * t + u.z * s, c + u.y * u.y * t,       u.y * u.z * t - u.x * s,
         u.z * u.x * t - u.y * s, u.z * u.y * t + u.x * s, c + u.z * u.z * t};
  return r;
}

namespace detail {

// 2D segment intersection test including endpoints, used by the coplanar
// branch of triangles_intersect.
inline bool segments_intersect_2d(const std::array<double, 2>& p1, const std::array<double, 2>& p2,
                                  const std::array<double, 2>& q1, const std::array<double, 2>& q2) {
  auto orient = [](const std::array<double, 2>& a, const std::array<double, 2>& b,
                   const std::array<double, 2>& c) {
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
  };
  auto on_segment = [](const std::array<double, 2>& a, const std::array<double, 2>& b,
                       const std::array<double, 2>& c) {
    return std::min(a[0], b[0]) <= c[0] && c[0] <= std::max(a[0], b[0]) &&
           std::min(a[1], b[1]) <= c[1] && c[1] <= std::max(a[1], b[1]);
  };
  double d1 = orient(q1, q2, p1);
  double d2 = orient(q1, q2, p2);
  double d3 = orient(p1, p2, q1);
  double d4 = orient(p1, p2, q2);
  if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0)))
    return true;
  if (d1 == 0 && on_segment(q1, q2, p1)) return true;
  if (d2 == 0 && on_segment(q1, q2, p2)) return true;
  if (d3 == 0 && on_segment(p1, p2, q1)) return true;
  if (d4 == 0 && on_segment(p1, p2, q2)) return true;
  return false;
}

inline bool point_in_triangle_2d(const std::array<double, 2>& p, const std::array<double, 2>& a,
                                 const std::array<double, 2>& b, const std::array<double, 2>& c) {
  auto sign = [](const std::array<double, 2>& u, const std::array<double, 2>& v,
                 const std::array<double, 2>& w) {
    return (u[0] - w[0]) * (v[1] - w[1]) - (v[0] - w[0]) * (u[1] - w[1]);
  };
  double d1 = sign(p, a, b), d2 = sign(p, b, c), d3 = sign(p, c, a);
  bool has_neg = (d1 < 0) || (d2 < 0) || (d3 < 0);
  bool has_pos = (d1 > 0) || (d2 > 0) || (d3 > 0);
  return !(has_neg && has_pos);
}

}  // namespace detail

// Triangle-triangle intersection predicate (Moller's interval test with a
// projected 2D fallback for the coplanar case). Shared vertices count as an
// intersection here; callers screening mesh self-intersections should skip
// face pairs that share indices.
inline bool triangles_intersect(const Vec3& p0, const Vec3& p1, const Vec3& p2,
                                const Vec3& q0, const Vec3& q1, const Vec3& q2) {
  const Vec3 n2 = cross(q1 - q0, q2 - q0);
  double dp0 = dot(n2, p0 - q0);
  double dp1 = dot(n2, p1 - q0);
  double dp2 = dot(n2, p2 - q0);
  if ((dp0 > 0 && dp1 > 0 && dp2 > 0) || (dp0 < 0 && dp1 < 0 && dp2 < 0)) return false;

  const Vec3 n1 = cross(p1 - p0, p2 - p0);
  double dq0 = dot(n1, q0 - p0);
  double dq1 = dot(n1, q1 - p0);
  double dq2 = dot(n1, q2 - p0);
  if ((dq0 > 0 && dq1 > 0 && dq2 > 0) || (dq0 < 0 && dq1 < 0 && dq2 < 0)) return false;

  const Vec3 d = cross(n1, n2);
  double dmax = std::max({std::abs(d.x), std::abs(d.y), std::abs(d.z)});

  if (dmax == 0.0) {
    // Coplanar: project onto the dominant axis plane and test 2D overlap.
    Vec3 n = n1;
    if (norm_sq(n) == 0.0) n = n2;
    if (norm_sq(n) == 0.0) n = {0.0, 0.0, 1.0};
    int drop = 2;
    if (std::abs(n.x) >= std::abs(n.y) && std::abs(n.x) >= std::abs(n.z)) drop = 0;
    else if (std::abs(n.y) >= std::abs(n.z)) drop = 1;
    auto proj = [drop](const Vec3& v) -> std::array<double, 2> {
      if (drop == 0) return {v.y, v.z};
      if (drop == 1) return {v.x, v.z};
      return {v.x, v.y};
    };
    std::array<std::array<double, 2>, 3> t1 = {proj(p0), proj(p1), proj(p2)};
    std::array<std::array<double, 2>, 3> t2 = {proj(q0), proj(q1), proj(q2)};
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        if (detail::segments_intersect_2d(t1[i], t1[(i + 1) % 3], t2[j], t2[(j + 1) % 3]))
          return true;
    if (detail::point_in_triangle_2d(t1[0], t2[0], t2[1], t2[2])) return true;
    if (detail::point_in_triangle_2d(t2[0], t1[0], t1[1], t1[2])) return true;
    return false;
  }

  // Parametrize both triangles on the intersection line L(t) = O + t*d and
  // compare the scalar intervals.
  auto interval = [&](const Vec3& v0, const Vec3& v1, const Vec3& v2, double e0, double e1,
                      double e2, double& lo, double& hi) -> bool {
    double t0 = dot(d, v0), t1 = dot(d, v1), t2 = dot(d, v2);
    auto split = [&](double a, double b, double c, double da, double db, double dc, double& l,
                     double& h) {
      // a is the vertex alone on its side of the other plane
      double s1 = a + (b - a) * (da / (da - db));
      double s2 = a + (c - a) * (da / (da - dc));
      l = std::min(s1, s2);
      h = std::max(s1, s2);
    };
    // Identify the lone vertex by sign pattern of (e0,e1,e2).
    if ((e0 > 0 && e1 <= 0 && e2 <= 0) || (e0 < 0 && e1 >= 0 && e2 >= 0)) {
      split(t0, t1, t2, e0, e1, e2, lo, hi);
    } else if ((e1 > 0 && e0 <= 0 && e2 <= 0) || (e1 < 0 && e0 >= 0 && e2 >= 0)) {
      split(t1, t0, t2, e1, e0, e2, lo, hi);
    } else if ((e2 > 0 && e0 <= 0 && e1 <= 0) || (e2 < 0 && e0 >= 0 && e1 >= 0)) {
      split(t2, t0, t1, e2, e0, e1, lo, hi);
    } else {
      // All three distances are zero: triangle lies on the plane; treat its
      // full projection as the interval.
      lo = std::min({t0, t1, t2});
      hi = std::max({t0, t1, t2});
      if (e0 == 0 && e1 == 0 && e2 == 0) return true;
      // Two zeros and one non-zero: the edge between the zero vertices lies on L.
      if (e0 != 0) { lo = std::min(t1, t2); hi = std::max(t1, t2); }
      else if (e1 != 0) { lo = std::min(t0, t2); hi = std::max(t0, t2); }
      else { lo = std::min(t0, t1); hi = std::max(t0, t1); }
    }
    return true;
  };

  double lo1, hi1, lo2, hi2;
  interval(p0, p1, p2, dp0, dp1, dp2, lo1, hi1);
  interval(q0, q1, q2, dq0, dq1, dq2, lo2, hi2);
  return std::max(lo1, lo2) <= std::min(hi1, hi2);
}

}  // namespace meshdeform

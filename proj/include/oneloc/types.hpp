#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>

namespace oneloc {

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend constexpr Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
  friend constexpr Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
  friend constexpr Point2 operator*(double k, Point2 a) { return {k * a.x, k * a.y}; }
  friend constexpr Point2 operator*(Point2 a, double k) { return {k * a.x, k * a.y}; }
  friend constexpr bool operator==(Point2, Point2) = default;
};

/// Scalar (z-component) cross product of two plane vectors.
constexpr double cross(Point2 a, Point2 b) { return a.x * b.y - a.y * b.x; }
constexpr double dot(Point2 a, Point2 b) { return a.x * b.x + a.y * b.y; }
inline double norm(Point2 a) { return std::hypot(a.x, a.y); }

inline Point2 rotate(Point2 p, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  return {c * p.x - s * p.y, s * p.x + c * p.y};
}

/// Unit direction; dx^2 + dy^2 == 1 is maintained by the producers.
struct UnitDir {
  double dx = 1.0;
  double dy = 0.0;

  constexpr Point2 vec() const { return {dx, dy}; }
  static UnitDir from_angle(double theta) { return {std::cos(theta), std::sin(theta)}; }
  friend constexpr bool operator==(UnitDir, UnitDir) = default;
};

/// Point offset from the box center divided element-wise by the box size.
struct RelSize {
  double sx = 0.0;
  double sy = 0.0;
  friend constexpr bool operator==(RelSize, RelSize) = default;
};

struct Size2 {
  double w = 0.0;
  double h = 0.0;
  friend constexpr bool operator==(Size2, Size2) = default;
};

/// Axis-aligned box stored as center + size, in pixels.
struct BBox {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;

  constexpr Point2 center() const { return {cx, cy}; }
  constexpr Size2 size() const { return {w, h}; }
  constexpr double x0() const { return cx - 0.5 * w; }
  constexpr double x1() const { return cx + 0.5 * w; }
  constexpr double y0() const { return cy - 0.5 * h; }
  constexpr double y1() const { return cy + 0.5 * h; }
  constexpr double area() const { return w * h; }
  constexpr bool valid() const { return w > 0.0 && h > 0.0; }
  constexpr bool contains(Point2 p) const {
    return p.x >= x0() && p.x <= x1() && p.y >= y0() && p.y <= y1();
  }
  constexpr BBox scaled(double k) const { return {k * cx, k * cy, k * w, k * h}; }
  friend constexpr bool operator==(const BBox&, const BBox&) = default;
};

struct Detection {
  BBox box;
  double score = 0.0;
};

using IndexPair = std::pair<std::size_t, std::size_t>;

}  // namespace oneloc

#pragma once

// Vote mathematics: direction targets, analytic pair intersection,
// relative-size algebra and first-order covariance of a pair vote.

#include <cmath>
#include <optional>
#include <string>

#include <Eigen/Core>

#include "oneloc/error.hpp"
#include "oneloc/types.hpp"

namespace oneloc {

inline constexpr double kDegeneratePointEps = 1e-9;
inline constexpr double kParallelEps = 1e-9;
inline constexpr double kMinSizeVote = 0.02;

enum class RayCheck { one, both };

/// Unit vector pointing from `p` toward the box center `o`.
inline UnitDir center_direction(Point2 p, Point2 o) {
  const Point2 off = o - p;
  const double len = norm(off);
  if (len < kDegeneratePointEps) {
    fail(ErrorCode::degenerate_point, "point coincides with the center");
  }
  return {off.x / len, off.y / len};
}

struct RayParams {
  double t1 = 0.0;
  double t2 = 0.0;
};

/// Ray parameters of the intersection p1 + t1*d1 == p2 + t2*d2, or empty for
/// (near-)parallel rays.
inline std::optional<RayParams> ray_params(Point2 p1, UnitDir d1, Point2 p2, UnitDir d2) {
  const double denom = cross(d1.vec(), d2.vec());
  if (std::abs(denom) < kParallelEps) return std::nullopt;
  const Point2 delta = p2 - p1;
  return RayParams{cross(delta, d2.vec()) / denom, cross(delta, d1.vec()) / denom};
}

/// Center vote cast by a pair of rays. Empty when the rays are parallel or the
/// intersection lies behind a ray (behind ray 1 only, or behind either ray
/// with RayCheck::both).
inline std::optional<Point2> intersect_pair(Point2 p1, UnitDir d1, Point2 p2, UnitDir d2,
                                            RayCheck check = RayCheck::both) {
  const auto t = ray_params(p1, d1, p2, d2);
  if (!t) return std::nullopt;
  if (t->t1 < 0.0) return std::nullopt;
  if (check == RayCheck::both && t->t2 < 0.0) return std::nullopt;
  return p1 + t->t1 * d1.vec();
}

inline RelSize relative_size(Point2 p, Point2 c, Size2 s_bar) {
  if (!(s_bar.w > 0.0) || !(s_bar.h > 0.0)) {
    fail(ErrorCode::invalid_size, "box size must be positive");
  }
  return {(p.x - c.x) / s_bar.w, (p.y - c.y) / s_bar.h};
}

struct SizeEstimate {
  std::optional<double> w;
  std::optional<double> h;
  double weight_w = 1.0;
  double weight_h = 1.0;
};

/// Inverts the relative size of `p` against an estimated center. Axes whose
/// relative size is within kMinSizeVote of zero carry no usable information,
/// and a non-positive extent contradicts the vote, so both yield no estimate.
inline SizeEstimate absolute_size_from_vote(Point2 p, Point2 c_hat, RelSize s) {
  auto axis = [](double offset, double rel) -> std::optional<double> {
    if (!(std::abs(rel) >= kMinSizeVote)) return std::nullopt;
    const double extent = offset / rel;
    if (!(extent > 0.0) || !std::isfinite(extent)) return std::nullopt;
    return extent;
  };
  return {axis(p.x - c_hat.x, s.sx), axis(p.y - c_hat.y, s.sy)};
}

/// Canonical two-ray configuration: p1 at the origin with direction angle
/// `alpha`, p2 at (a, b) with direction angle `beta`, and isotropic angular
/// noise of standard deviation `sigma` on both angles.
struct PairGeometry {
  double a = 1.0;
  double b = 1.0;
  double alpha = 0.0;
  double beta = 0.0;
  double sigma = 0.0;
};

/// Rotates the frame so that alpha == 0.
inline PairGeometry canonicalize(const PairGeometry& g) {
  const Point2 p2 = rotate({g.a, g.b}, -g.alpha);
  return {p2.x, p2.y, 0.0, g.beta - g.alpha, g.sigma};
}

/// Intersection of the pair as a function of the two direction angles; no ray
/// rejection, so it is smooth wherever the rays are not parallel.
inline std::optional<Point2> pair_vote(const PairGeometry& g, double alpha, double beta) {
  const double s = std::sin(beta - alpha);
  if (std::abs(s) < kParallelEps) return std::nullopt;
  const double k = g.a * std::sin(beta) - g.b * std::cos(beta);
  const double t1 = k / s;
  return Point2{t1 * std::cos(alpha), t1 * std::sin(alpha)};
}

/// det(J) of the map (alpha, beta) -> intersection, in the closed form
/// b (b cos(beta) - a sin(beta)) / sin^3(beta) of the alpha == 0 frame. Other
/// frames are rotated to alpha == 0 first; the determinant is rotation
/// invariant.
inline double jacobian_det(const PairGeometry& g) {
  const PairGeometry c = canonicalize(g);
  const double s = std::sin(c.beta);
  if (std::abs(s) < kParallelEps) {
    fail(ErrorCode::parallel_configuration, "rays are parallel (sin(beta) ~ 0)");
  }
  return c.b * (c.b * std::cos(c.beta) - c.a * std::sin(c.beta)) / (s * s * s);
}

/// Full analytic Jacobian d(intersection)/d(alpha, beta), columns ordered
/// (alpha, beta). Valid in any frame.
inline Eigen::Matrix2d pair_jacobian(const PairGeometry& g) {
  const double s = std::sin(g.beta - g.alpha);
  if (std::abs(s) < kParallelEps) {
    fail(ErrorCode::parallel_configuration, "rays are parallel (sin(beta - alpha) ~ 0)");
  }
  const double c = std::cos(g.beta - g.alpha);
  const double k = g.a * std::sin(g.beta) - g.b * std::cos(g.beta);
  const double dk_dbeta = g.a * std::cos(g.beta) + g.b * std::sin(g.beta);
  const double t1 = k / s;
  const double dt_dalpha = k * c / (s * s);
  const double dt_dbeta = (dk_dbeta * s - k * c) / (s * s);
  const double ca = std::cos(g.alpha);
  const double sa = std::sin(g.alpha);

  Eigen::Matrix2d j;
  j(0, 0) = dt_dalpha * ca - t1 * sa;
  j(1, 0) = dt_dalpha * sa + t1 * ca;
  j(0, 1) = dt_dbeta * ca;
  j(1, 1) = dt_dbeta * sa;
  return j;
}

/// First-order covariance J * sigma^2 I * J^T of the center vote.
inline Eigen::Matrix2d cov_analytic(const PairGeometry& g) {
  const Eigen::Matrix2d j = pair_jacobian(g);
  return (g.sigma * g.sigma) * (j * j.transpose());
}

inline double cov_det_analytic(const PairGeometry& g) {
  const double det = jacobian_det(g);
  const double s2 = g.sigma * g.sigma;
  return s2 * s2 * det * det;
}

}  // namespace oneloc

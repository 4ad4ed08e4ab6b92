#pragma once

// Synthetic data and oracles: Monte-Carlo vote covariance, direction fields
// with angular noise, and descriptor scenes whose in-box descriptors encode
// the normalized object coordinate.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "oneloc/descriptor_map.hpp"
#include "oneloc/error.hpp"
#include "oneloc/geometry.hpp"
#include "oneloc/rng.hpp"
#include "oneloc/training.hpp"
#include "oneloc/types.hpp"

namespace oneloc {

/// Sample covariance of the pair vote under i.i.d. Normal(0, sigma^2) noise on
/// both direction angles. Draws rejected by the ray check are skipped.
inline Eigen::Matrix2d monte_carlo_cov(const PairGeometry& g, std::size_t n, std::uint64_t seed) {
  const Point2 p1{0.0, 0.0};
  const Point2 p2{g.a, g.b};
  if (!intersect_pair(p1, UnitDir::from_angle(g.alpha), p2, UnitDir::from_angle(g.beta))) {
    fail(ErrorCode::degenerate_configuration, "noiseless rays do not intersect ahead of both points");
  }
  if (n < 2) fail(ErrorCode::invalid_argument, "need at least two draws");
  Rng rng = make_rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);

  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  Eigen::Matrix2d m2 = Eigen::Matrix2d::Zero();
  std::size_t kept = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double alpha = g.alpha + g.sigma * noise(rng);
    const double beta = g.beta + g.sigma * noise(rng);
    const auto c = intersect_pair(p1, UnitDir::from_angle(alpha), p2, UnitDir::from_angle(beta));
    if (!c) continue;
    ++kept;
    // Welford update.
    const Eigen::Vector2d x(c->x, c->y);
    const Eigen::Vector2d delta = x - mean;
    mean += delta / static_cast<double>(kept);
    m2 += delta * (x - mean).transpose();
  }
  if (2 * kept < n) fail(ErrorCode::degenerate_configuration, "more than half of the draws were rejected");
  Eigen::Matrix2d cov = m2 / static_cast<double>(kept - 1);
  cov(0, 1) = cov(1, 0) = 0.5 * (cov(0, 1) + cov(1, 0));
  return cov;
}

enum class VoteTarget { center, corner };

/// Ground-truth predictions for `points`: direction to the box center (or
/// its top-left corner) rotated by a Normal(0, sigma^2) angle, and the
/// center-based relative size.
inline std::vector<Prediction> gen_direction_field(const BBox& box, std::span<const Point2> points, double sigma,
                                                   VoteTarget target, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  const Point2 goal = target == VoteTarget::center ? box.center() : Point2{box.x0(), box.y0()};
  std::vector<Prediction> out;
  out.reserve(points.size());
  for (const Point2& p : points) {
    const double eps = sigma * noise(rng);
    if (norm(goal - p) < kDegeneratePointEps || norm(box.center() - p) < kDegeneratePointEps) {
      out.push_back({});
      continue;
    }
    const Point2 d = rotate(center_direction(p, goal).vec(), eps);
    out.push_back({{d.x, d.y}, relative_size(p, box.center(), box.size()), true});
  }
  return out;
}

/// Fixed seeded map from normalized object coordinates (u, v) in
/// [-0.5, 0.5]^2 to unit descriptors: random Fourier features
/// cos(w_k . (u, v) + phi_k), normalized. The seed plays the role of object
/// identity.
class ObjectEmbedding {
 public:
  ObjectEmbedding(int dim, std::uint64_t seed, double frequency = 3.0) : dim_(dim) {
    if (dim < 1) fail(ErrorCode::invalid_argument, "embedding dim must be >= 1");
    Rng rng = make_rng(seed, 0xe3b);
    std::normal_distribution<double> normal(0.0, frequency);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    wu_.resize(static_cast<std::size_t>(dim));
    wv_.resize(static_cast<std::size_t>(dim));
    phi_.resize(static_cast<std::size_t>(dim));
    for (int k = 0; k < dim; ++k) {
      wu_[static_cast<std::size_t>(k)] = normal(rng);
      wv_[static_cast<std::size_t>(k)] = normal(rng);
      phi_[static_cast<std::size_t>(k)] = phase(rng);
    }
  }

  int dim() const noexcept { return dim_; }

  void embed(double u, double v, std::span<float> out) const {
    double sq = 0.0;
    for (std::size_t k = 0; k < out.size(); ++k) {
      const double f = std::cos(wu_[k] * u + wv_[k] * v + phi_[k]);
      out[k] = static_cast<float>(f);
      sq += f * f;
    }
    const double inv = sq > 0.0 ? 1.0 / std::sqrt(sq) : 0.0;
    for (float& x : out) x = static_cast<float>(x * inv);
  }

  std::vector<float> embed(double u, double v) const {
    std::vector<float> out(static_cast<std::size_t>(dim_));
    embed(u, v, out);
    return out;
  }

 private:
  int dim_;
  std::vector<double> wu_;
  std::vector<double> wv_;
  std::vector<double> phi_;
};

struct SyntheticScene {
  DescriptorMap map;
  std::vector<BBox> boxes;
  double noise = 0.0;
};

namespace detail {

inline void add_noise_and_normalize(std::span<float> d, double noise, Rng& rng,
                                    std::normal_distribution<double>& normal) {
  const double scale = noise / std::sqrt(static_cast<double>(d.size()));
  double sq = 0.0;
  for (float& x : d) {
    const double v = x + scale * normal(rng);
    x = static_cast<float>(v);
    sq += v * v;
  }
  const double inv = sq > 0.0 ? 1.0 / std::sqrt(sq) : 0.0;
  for (float& x : d) x = static_cast<float>(x * inv);
}

}  // namespace detail

/// Descriptor scene: pixels inside a box (first match wins) carry the
/// object embedding of their normalized coordinate plus noise of relative
/// magnitude `noise`; background pixels carry unit Gaussian noise.
inline SyntheticScene gen_scene(int height, int width, std::vector<BBox> boxes, const ObjectEmbedding& embedding,
                                double noise, std::uint64_t seed) {
  for (const BBox& b : boxes) {
    if (!b.valid() || b.x0() < 0.0 || b.y0() < 0.0 || b.x1() > width || b.y1() > height) {
      fail(ErrorCode::box_out_of_bounds, "scene box must lie inside the image");
    }
  }
  SyntheticScene scene{DescriptorMap(height, width, embedding.dim()), std::move(boxes), noise};
  Rng rng = make_rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      auto d = scene.map.at(r, c);
      const Point2 p{static_cast<double>(c), static_cast<double>(r)};
      const BBox* owner = nullptr;
      for (const BBox& b : scene.boxes) {
        if (b.contains(p)) {
          owner = &b;
          break;
        }
      }
      if (owner) {
        embedding.embed((p.x - owner->cx) / owner->w, (p.y - owner->cy) / owner->h, d);
        detail::add_noise_and_normalize(d, noise, rng, normal);
      } else {
        for (float& x : d) x = 0.0f;
        detail::add_noise_and_normalize(d, 1.0, rng, normal);
      }
    }
  }
  return scene;
}

/// Noise descriptors plus a keypoint score map whose left half has
/// `density_ratio` times the peak density of the right half.
inline SyntheticScene gen_dual_texture_scene(int height, int width, int dim, double textured_density,
                                             double density_ratio, std::uint64_t seed) {
  SyntheticScene scene{DescriptorMap(height, width, dim), {}, 1.0};
  Rng rng = make_rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<float> scores(scene.map.pixel_count(), 0.0f);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      detail::add_noise_and_normalize(scene.map.at(r, c), 1.0, rng, normal);
      const double density = 2 * c < width ? textured_density : textured_density / density_ratio;
      if (unit(rng) < density) {
        scores[static_cast<std::size_t>(r) * width + c] = static_cast<float>(0.5 + 0.5 * unit(rng));
      }
    }
  }
  scene.map.set_scores(std::move(scores));
  return scene;
}

/// Box of size `base` scaled by a factor drawn from [scale_lo, scale_hi],
/// placed uniformly so that it lies fully inside the image.
inline BBox random_box(int height, int width, Size2 base, double scale_lo, double scale_hi, Rng& rng) {
  std::uniform_real_distribution<double> scale_dist(scale_lo, scale_hi);
  const double k = scale_dist(rng);
  const double w = base.w * k;
  const double h = base.h * k;
  if (w >= width || h >= height) fail(ErrorCode::box_out_of_bounds, "box larger than the image");
  std::uniform_real_distribution<double> cx(0.5 * w + 1.0, width - 0.5 * w - 1.0);
  std::uniform_real_distribution<double> cy(0.5 * h + 1.0, height - 0.5 * h - 1.0);
  return {cx(rng), cy(rng), w, h};
}

/// `count` equally sized boxes whose centers are at least `min_gap` pixels
/// apart along some axis beyond the box extent (non-overlapping).
inline std::vector<BBox> separated_boxes(int height, int width, Size2 size, int count, double min_gap, Rng& rng) {
  std::uniform_real_distribution<double> cx(0.5 * size.w + 1.0, width - 0.5 * size.w - 1.0);
  std::uniform_real_distribution<double> cy(0.5 * size.h + 1.0, height - 0.5 * size.h - 1.0);
  for (int attempt = 0; attempt < 10000; ++attempt) {
    std::vector<BBox> boxes;
    for (int tries = 0; tries < 1000 && static_cast<int>(boxes.size()) < count; ++tries) {
      const BBox b{cx(rng), cy(rng), size.w, size.h};
      bool ok = true;
      for (const BBox& o : boxes) {
        const bool apart_x = std::abs(b.cx - o.cx) >= size.w + min_gap;
        const bool apart_y = std::abs(b.cy - o.cy) >= size.h + min_gap;
        if (!apart_x && !apart_y) {
          ok = false;
          break;
        }
      }
      if (ok) boxes.push_back(b);
    }
    if (static_cast<int>(boxes.size()) == count) return boxes;
  }
  fail(ErrorCode::degenerate_configuration, "could not place separated boxes");
}

}  // namespace oneloc

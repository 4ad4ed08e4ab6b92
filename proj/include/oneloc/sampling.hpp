#pragma once

// Voting point selection: stratified (equalized) dense sampling, sparse
// keypoints from a score map, descriptor lookup, and distance-bounded pairs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "oneloc/descriptor_map.hpp"
#include "oneloc/error.hpp"
#include "oneloc/rng.hpp"
#include "oneloc/types.hpp"

namespace oneloc {

struct SamplerConfig {
  int strata_divisor = 50;
  double pair_distance_fraction = 0.25;
  int pair_count = 10000;
  std::uint64_t seed = 0;
};

inline int strata_size(int height, int width, int divisor) {
  if (divisor < 1) fail(ErrorCode::invalid_argument, "strata divisor must be >= 1");
  const int smaller = std::min(height, width);
  if (smaller < divisor) {
    fail(ErrorCode::image_too_small,
         "image side " + std::to_string(smaller) + " is smaller than divisor " + std::to_string(divisor));
  }
  return smaller / divisor;
}

/// Pair separation limit: a fraction of the larger image side.
inline double pair_max_distance(int height, int width, double fraction) {
  return fraction * static_cast<double>(std::max(height, width));
}

/// One jittered point per complete stratum, row-major over strata. Partial
/// strata on the right and bottom edges are dropped.
inline std::vector<Point2> stratified_sample(int height, int width, int stratum, std::uint64_t seed) {
  if (stratum < 1) fail(ErrorCode::invalid_argument, "stratum must be >= 1");
  const int rows = height / stratum;
  const int cols = width / stratum;
  const double s = stratum;
  Rng rng = make_rng(seed);
  std::uniform_real_distribution<double> jitter(-0.5 * s, 0.5 * s);

  std::vector<Point2> points;
  points.reserve(static_cast<std::size_t>(std::max(rows, 0)) * static_cast<std::size_t>(std::max(cols, 0)));
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      const double u = jitter(rng);
      const double v = jitter(rng);
      points.push_back({s * (j + 0.5) + u, s * (i + 0.5) + v});
    }
  }
  return points;
}

/// Bilinear lookup into `map` written to `out`, renormalized to unit length
/// (left as is when the blend is the zero vector).
inline void interpolate_descriptor(const DescriptorMap& map, Point2 p, std::span<float> out) {
  if (out.size() != static_cast<std::size_t>(map.dim())) {
    fail(ErrorCode::shape_mismatch, "output span does not match descriptor dim");
  }
  const double max_x = map.width() - 1;
  const double max_y = map.height() - 1;
  if (!(p.x >= 0.0 && p.x <= max_x && p.y >= 0.0 && p.y <= max_y)) {
    fail(ErrorCode::out_of_bounds, "sample point outside the descriptor map");
  }
  const int x0 = std::min(static_cast<int>(p.x), map.width() - 1);
  const int y0 = std::min(static_cast<int>(p.y), map.height() - 1);
  const int x1 = std::min(x0 + 1, map.width() - 1);
  const int y1 = std::min(y0 + 1, map.height() - 1);
  const double fx = p.x - x0;
  const double fy = p.y - y0;
  const double w00 = (1.0 - fx) * (1.0 - fy);
  const double w01 = fx * (1.0 - fy);
  const double w10 = (1.0 - fx) * fy;
  const double w11 = fx * fy;

  const auto a = map.at(y0, x0);
  const auto b = map.at(y0, x1);
  const auto c = map.at(y1, x0);
  const auto d = map.at(y1, x1);
  double sq = 0.0;
  for (std::size_t k = 0; k < out.size(); ++k) {
    const double v = w00 * a[k] + w01 * b[k] + w10 * c[k] + w11 * d[k];
    out[k] = static_cast<float>(v);
    sq += v * v;
  }
  if (sq > 0.0) {
    const double inv = 1.0 / std::sqrt(sq);
    for (float& v : out) v = static_cast<float>(v * inv);
  }
}

inline std::vector<float> interpolate_descriptor(const DescriptorMap& map, Point2 p) {
  std::vector<float> out(static_cast<std::size_t>(map.dim()));
  interpolate_descriptor(map, p, out);
  return out;
}

/// Clamps a sample position into the interpolation domain [0, w-1]x[0, h-1].
/// Strata touching the right/bottom border can place points in the last
/// half-open pixel.
inline Point2 clamp_to_map(const DescriptorMap& map, Point2 p) {
  return {std::clamp(p.x, 0.0, static_cast<double>(map.width() - 1)),
          std::clamp(p.y, 0.0, static_cast<double>(map.height() - 1))};
}

/// Sparse keypoints: 3x3 local maxima of the score map above `threshold`,
/// kept greedily by descending score while farther than `nms_radius` from
/// every kept point, capped at `max_points`. Ties resolve in row-major order.
inline std::vector<Point2> sparse_keypoints(const DescriptorMap& map, double nms_radius, double threshold,
                                            int max_points) {
  if (!map.has_scores()) fail(ErrorCode::no_score_map, "sparse keypoints need a score map");
  const auto& scores = map.scores();
  const int h = map.height();
  const int w = map.width();
  auto at = [&](int r, int c) { return scores[static_cast<std::size_t>(r) * w + c]; };

  struct Candidate {
    float score;
    int row;
    int col;
  };
  std::vector<Candidate> candidates;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const float s = at(r, c);
      if (!(s > threshold)) continue;
      bool is_max = true;
      for (int dr = -1; dr <= 1 && is_max; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          const int rr = r + dr;
          const int cc = c + dc;
          if ((dr == 0 && dc == 0) || rr < 0 || cc < 0 || rr >= h || cc >= w) continue;
          if (at(rr, cc) > s) {
            is_max = false;
            break;
          }
        }
      }
      if (is_max) candidates.push_back({s, r, c});
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Candidate& a, const Candidate& b) { return a.score > b.score; });

  // Raster of kept points; a candidate survives if no kept point lies within
  // nms_radius (inclusive).
  std::vector<std::uint8_t> kept(static_cast<std::size_t>(h) * w, 0);
  const int reach = static_cast<int>(std::floor(nms_radius));
  const double r2 = nms_radius * nms_radius;
  std::vector<Point2> out;
  for (const Candidate& cand : candidates) {
    if (static_cast<int>(out.size()) >= max_points) break;
    bool clear = true;
    for (int dr = -reach; dr <= reach && clear; ++dr) {
      const int rr = cand.row + dr;
      if (rr < 0 || rr >= h) continue;
      for (int dc = -reach; dc <= reach; ++dc) {
        const int cc = cand.col + dc;
        if (cc < 0 || cc >= w) continue;
        if (kept[static_cast<std::size_t>(rr) * w + cc] &&
            static_cast<double>(dr * dr + dc * dc) <= r2) {
          clear = false;
          break;
        }
      }
    }
    if (!clear) continue;
    kept[static_cast<std::size_t>(cand.row) * w + cand.col] = 1;
    out.push_back({static_cast<double>(cand.col), static_cast<double>(cand.row)});
  }
  return out;
}

/// Uniform index pairs with replacement, rejecting self-pairs and pairs
/// farther apart than `max_dist`. Stops after 100 * count rejections.
inline std::vector<IndexPair> sample_pairs(std::span<const Point2> points, double max_dist, int count,
                                           std::uint64_t seed) {
  if (points.size() < 2) fail(ErrorCode::insufficient_points, "need at least two points to form pairs");
  if (count < 1) return {};
  Rng rng = make_rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, points.size() - 1);
  const double max_d2 = max_dist * max_dist;
  const std::size_t budget = 100 * static_cast<std::size_t>(count);

  std::vector<IndexPair> pairs;
  pairs.reserve(static_cast<std::size_t>(count));
  std::size_t rejections = 0;
  while (pairs.size() < static_cast<std::size_t>(count) && rejections < budget) {
    const std::size_t i = pick(rng);
    const std::size_t j = pick(rng);
    const Point2 d = points[i] - points[j];
    if (i == j || dot(d, d) > max_d2) {
      ++rejections;
      continue;
    }
    pairs.emplace_back(i, j);
  }
  return pairs;
}

}  // namespace oneloc

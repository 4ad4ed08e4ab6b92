#pragma once

// Center-vote accumulation with co-accumulated size evidence, peak
// extraction for localization, and grid NMS for multi-instance detection.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "oneloc/error.hpp"
#include "oneloc/geometry.hpp"
#include "oneloc/training.hpp"
#include "oneloc/types.hpp"

namespace oneloc {

enum class SizeAggregation { at_intersection, at_peak };

/// How per-point size estimates are averaged. `inverse_variance` weights an
/// estimate offset / s by s^2: an error in s or in the center moves it by
/// an amount proportional to 1 / s.
enum class SizeWeighting { uniform, inverse_variance };

struct VoteConfig {
  RayCheck ray_check = RayCheck::both;
  SizeAggregation size_aggregation = SizeAggregation::at_intersection;
  SizeWeighting size_weighting = SizeWeighting::inverse_variance;
  TargetConfig targets;
};

/// Per-point size evidence given an estimated center.
inline SizeEstimate size_evidence(Point2 p, Point2 center, RelSize s, const TargetConfig& targets,
                                  SizeWeighting weighting = SizeWeighting::uniform) {
  if (targets.size_target == SizeTarget::relative) {
    SizeEstimate e = absolute_size_from_vote(p, center, s);
    if (weighting == SizeWeighting::inverse_variance) {
      e.weight_w = s.sx * s.sx;
      e.weight_h = s.sy * s.sy;
    }
    return e;
  }
  SizeEstimate e;
  if (s.sx > 0.0) e.w = s.sx * targets.abs_size_unit;
  if (s.sy > 0.0) e.h = s.sy * targets.abs_size_unit;
  return e;
}

/// Downsampled vote histogram over the image. Each cell also keeps the sum of
/// vote positions (for centroid refinement) and per-axis size sums/counts.
class AccumulatorGrid {
 public:
  AccumulatorGrid() = default;

  AccumulatorGrid(int height, int width, double cell) : height_(height), width_(width), cell_(cell) {
    if (!(cell >= 1.0)) fail(ErrorCode::invalid_argument, "grid cell must be >= 1 px");
    rows_ = static_cast<int>(std::ceil(height / cell));
    cols_ = static_cast<int>(std::ceil(width / cell));
    const std::size_t n = static_cast<std::size_t>(rows_) * static_cast<std::size_t>(cols_);
    votes_.assign(n, 0.0);
    sum_x_.assign(n, 0.0);
    sum_y_.assign(n, 0.0);
    size_sum_w_.assign(n, 0.0);
    size_sum_h_.assign(n, 0.0);
    size_weight_w_.assign(n, 0.0);
    size_weight_h_.assign(n, 0.0);
    size_count_w_.assign(n, 0);
    size_count_h_.assign(n, 0);
  }

  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  double cell() const noexcept { return cell_; }
  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t index(int row, int col) const noexcept {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(cols_) + static_cast<std::size_t>(col);
  }

  bool in_image(Point2 c) const noexcept { return c.x >= 0.0 && c.y >= 0.0 && c.x < width_ && c.y < height_; }

  /// (row, col) of an in-image point.
  std::pair<int, int> cell_of(Point2 c) const noexcept {
    const int col = std::min(static_cast<int>(c.x / cell_), cols_ - 1);
    const int row = std::min(static_cast<int>(c.y / cell_), rows_ - 1);
    return {row, col};
  }

  Point2 cell_center(int row, int col) const noexcept { return {(col + 0.5) * cell_, (row + 0.5) * cell_}; }

  /// Adds one unit vote at `c`; returns the cell index, or empty when `c` is
  /// off-image.
  std::optional<std::size_t> add_vote(Point2 c) {
    if (!in_image(c)) return std::nullopt;
    const auto [row, col] = cell_of(c);
    const std::size_t i = index(row, col);
    votes_[i] += 1.0;
    sum_x_[i] += c.x;
    sum_y_[i] += c.y;
    return i;
  }

  void add_size(std::size_t i, const SizeEstimate& e) {
    if (e.w) {
      size_sum_w_[i] += e.weight_w * *e.w;
      size_weight_w_[i] += e.weight_w;
      ++size_count_w_[i];
    }
    if (e.h) {
      size_sum_h_[i] += e.weight_h * *e.h;
      size_weight_h_[i] += e.weight_h;
      ++size_count_h_[i];
    }
  }

  /// Direct cell edit, for hand-built grids. Vote positions default to the
  /// cell center.
  void set_cell(int row, int col, double votes, Size2 size_sum, std::uint32_t count_w, std::uint32_t count_h) {
    const std::size_t i = index(row, col);
    const Point2 c = cell_center(row, col);
    votes_[i] = votes;
    sum_x_[i] = votes * c.x;
    sum_y_[i] = votes * c.y;
    size_sum_w_[i] = size_sum.w;
    size_sum_h_[i] = size_sum.h;
    size_weight_w_[i] = count_w;
    size_weight_h_[i] = count_h;
    size_count_w_[i] = count_w;
    size_count_h_[i] = count_h;
  }

  double votes(int row, int col) const noexcept { return votes_[index(row, col)]; }
  std::span<const double> votes() const noexcept { return votes_; }
  std::uint32_t size_count_w(int row, int col) const noexcept { return size_count_w_[index(row, col)]; }
  std::uint32_t size_count_h(int row, int col) const noexcept { return size_count_h_[index(row, col)]; }
  double total_votes() const { return std::accumulate(votes_.begin(), votes_.end(), 0.0); }
  double max_votes() const { return votes_.empty() ? 0.0 : *std::max_element(votes_.begin(), votes_.end()); }

  /// Element-wise sum of two grids of identical geometry.
  AccumulatorGrid& operator+=(const AccumulatorGrid& o) {
    if (o.rows_ != rows_ || o.cols_ != cols_ || o.cell_ != cell_) {
      fail(ErrorCode::shape_mismatch, "grid geometry mismatch");
    }
    for (std::size_t i = 0; i < votes_.size(); ++i) {
      votes_[i] += o.votes_[i];
      sum_x_[i] += o.sum_x_[i];
      sum_y_[i] += o.sum_y_[i];
      size_sum_w_[i] += o.size_sum_w_[i];
      size_sum_h_[i] += o.size_sum_h_[i];
      size_weight_w_[i] += o.size_weight_w_[i];
      size_weight_h_[i] += o.size_weight_h_[i];
      size_count_w_[i] += o.size_count_w_[i];
      size_count_h_[i] += o.size_count_h_[i];
    }
    return *this;
  }

  struct Window {
    double votes = 0.0;
    Point2 centroid;
    std::optional<double> w;
    std::optional<double> h;
  };

  /// Vote centroid and mean size over the 3x3 neighborhood of a cell.
  Window window(int row, int col) const {
    Window out;
    double sx = 0.0, sy = 0.0, sw = 0.0, sh = 0.0, ww = 0.0, wh = 0.0;
    std::uint64_t nw = 0, nh = 0;
    for (int r = std::max(row - 1, 0); r <= std::min(row + 1, rows_ - 1); ++r) {
      for (int c = std::max(col - 1, 0); c <= std::min(col + 1, cols_ - 1); ++c) {
        const std::size_t i = index(r, c);
        out.votes += votes_[i];
        sx += sum_x_[i];
        sy += sum_y_[i];
        sw += size_sum_w_[i];
        sh += size_sum_h_[i];
        ww += size_weight_w_[i];
        wh += size_weight_h_[i];
        nw += size_count_w_[i];
        nh += size_count_h_[i];
      }
    }
    if (out.votes > 0.0) out.centroid = {sx / out.votes, sy / out.votes};
    if (nw > 0 && ww > 0.0) out.w = sw / ww;
    if (nh > 0 && wh > 0.0) out.h = sh / wh;
    return out;
  }

 private:
  int height_ = 0;
  int width_ = 0;
  double cell_ = 1.0;
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> votes_;
  std::vector<double> sum_x_;
  std::vector<double> sum_y_;
  std::vector<double> size_sum_w_;
  std::vector<double> size_sum_h_;
  std::vector<double> size_weight_w_;
  std::vector<double> size_weight_h_;
  std::vector<std::uint32_t> size_count_w_;
  std::vector<std::uint32_t> size_count_h_;
};

/// Casts one center vote per pair whose rays intersect on-image. With
/// SizeAggregation::at_intersection both endpoints also deposit their size
/// evidence in the vote's cell.
inline AccumulatorGrid accumulate(int height, int width, double cell, std::span<const Point2> points,
                                  std::span<const Prediction> predictions, std::span<const IndexPair> pairs,
                                  const VoteConfig& cfg = {}) {
  if (points.size() != predictions.size()) fail(ErrorCode::shape_mismatch, "predictions not aligned with points");
  AccumulatorGrid grid(height, width, cell);
  for (const auto& [i, j] : pairs) {
    const Prediction& a = predictions[i];
    const Prediction& b = predictions[j];
    if (!a.valid || !b.valid) continue;
    const auto c = intersect_pair(points[i], a.dir, points[j], b.dir, cfg.ray_check);
    if (!c) continue;
    const auto idx = grid.add_vote(*c);
    if (!idx || cfg.size_aggregation != SizeAggregation::at_intersection) continue;
    grid.add_size(*idx, size_evidence(points[i], *c, a.size, cfg.targets, cfg.size_weighting));
    grid.add_size(*idx, size_evidence(points[j], *c, b.size, cfg.targets, cfg.size_weighting));
  }
  return grid;
}

struct Peak {
  int row = 0;
  int col = 0;
  double score = 0.0;
  Point2 center;
  std::optional<double> w;
  std::optional<double> h;
};

/// Cells in descending vote order; ties go to the smaller row, then column.
inline std::vector<std::size_t> ranked_cells(const AccumulatorGrid& grid) {
  const auto votes = grid.votes();
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < votes.size(); ++i) {
    if (votes[i] > 0.0) order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return votes[a] > votes[b]; });
  return order;
}

inline Peak make_peak(const AccumulatorGrid& grid, std::size_t i) {
  Peak p;
  p.row = static_cast<int>(i / static_cast<std::size_t>(grid.cols()));
  p.col = static_cast<int>(i % static_cast<std::size_t>(grid.cols()));
  p.score = grid.votes()[i];
  const auto win = grid.window(p.row, p.col);
  p.center = win.centroid;
  p.w = win.w;
  p.h = win.h;
  return p;
}

/// Greedy NMS over cells: each kept peak suppresses every cell within
/// Chebyshev distance `nms_cells`. Peaks below `min_score` end the scan.
inline std::vector<Peak> find_peaks(const AccumulatorGrid& grid, int nms_cells, double min_score,
                                    int max_instances) {
  if (nms_cells < 1) fail(ErrorCode::invalid_argument, "nms_cells must be >= 1");
  std::vector<std::uint8_t> suppressed(grid.votes().size(), 0);
  std::vector<Peak> peaks;
  for (std::size_t i : ranked_cells(grid)) {
    if (static_cast<int>(peaks.size()) >= max_instances) break;
    if (grid.votes()[i] < min_score) break;
    if (suppressed[i]) continue;
    Peak p = make_peak(grid, i);
    for (int r = std::max(p.row - nms_cells, 0); r <= std::min(p.row + nms_cells, grid.rows() - 1); ++r) {
      for (int c = std::max(p.col - nms_cells, 0); c <= std::min(p.col + nms_cells, grid.cols() - 1); ++c) {
        suppressed[grid.index(r, c)] = 1;
      }
    }
    peaks.push_back(p);
  }
  return peaks;
}

/// Global maximum with 3x3 refinement. Throws EmptyGrid on an all-zero grid
/// and NoSizeEvidence when the window has no size estimate on some axis.
inline Detection find_peak(const AccumulatorGrid& grid) {
  const auto peaks = find_peaks(grid, 1, 0.0, 1);
  if (peaks.empty()) fail(ErrorCode::empty_grid, "no votes in the accumulator");
  const Peak& p = peaks.front();
  if (!p.w || !p.h) fail(ErrorCode::no_size_evidence, "no size estimate around the peak");
  return {{p.center.x, p.center.y, *p.w, *p.h}, p.score};
}

/// Detections from NMS peaks in descending score order. Peaks without size
/// evidence on both axes cannot form a box and are skipped.
inline std::vector<Detection> detect_in_grid(const AccumulatorGrid& grid, int nms_cells, double min_score,
                                             int max_instances) {
  std::vector<Detection> out;
  for (const Peak& p : find_peaks(grid, nms_cells, min_score, max_instances)) {
    if (!p.w || !p.h) continue;
    out.push_back({{p.center.x, p.center.y, *p.w, *p.h}, p.score});
  }
  return out;
}

/// Size re-estimated against a fixed center: every point whose predicted ray
/// passes within `radius` of the center (ahead of the point) contributes its
/// size evidence.
inline SizeEstimate size_at_center(Point2 center, std::span<const Point2> points,
                                   std::span<const Prediction> predictions, double radius,
                                   const VoteConfig& cfg) {
  double sw = 0.0, sh = 0.0, nw = 0.0, nh = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Prediction& pr = predictions[i];
    if (!pr.valid) continue;
    const Point2 off = center - points[i];
    if (dot(off, pr.dir.vec()) <= 0.0) continue;
    if (std::abs(cross(pr.dir.vec(), off)) > radius) continue;
    const SizeEstimate e = size_evidence(points[i], center, pr.size, cfg.targets, cfg.size_weighting);
    if (e.w) {
      sw += e.weight_w * *e.w;
      nw += e.weight_w;
    }
    if (e.h) {
      sh += e.weight_h * *e.h;
      nh += e.weight_h;
    }
  }
  SizeEstimate out;
  if (nw > 0.0) out.w = sw / nw;
  if (nh > 0.0) out.h = sh / nh;
  return out;
}

}  // namespace oneloc

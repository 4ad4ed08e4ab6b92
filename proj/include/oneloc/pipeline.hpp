#pragma once

// Full inference: sample points, predict, pair, vote, extract boxes.

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "oneloc/descriptor_map.hpp"
#include "oneloc/mlp.hpp"
#include "oneloc/rng.hpp"
#include "oneloc/sampling.hpp"
#include "oneloc/training.hpp"
#include "oneloc/voting.hpp"

namespace oneloc {

enum class SamplingMode { dense, sparse };

struct SparseConfig {
  double nms_radius = 4.0;
  double threshold = 0.015;
  int max_points = 5000;
};

struct PipelineConfig {
  SamplerConfig sampler;
  VoteConfig vote;
  SamplingMode sampling = SamplingMode::dense;
  SparseConfig sparse;
  int nms_cells = 3;
  double min_score_fraction = 0.001;
  int max_instances = 10;
};

struct VoteResult {
  std::vector<Point2> points;
  std::vector<Prediction> predictions;
  std::vector<IndexPair> pairs;
  AccumulatorGrid grid;
};

inline std::vector<Point2> voting_points(const DescriptorMap& map, const PipelineConfig& cfg, int stratum) {
  std::vector<Point2> points;
  if (cfg.sampling == SamplingMode::dense) {
    points = stratified_sample(map.height(), map.width(), stratum, mix_seed(cfg.sampler.seed, 1));
  } else {
    points = sparse_keypoints(map, cfg.sparse.nms_radius, cfg.sparse.threshold, cfg.sparse.max_points);
  }
  for (Point2& p : points) p = clamp_to_map(map, p);
  return points;
}

inline VoteResult cast_votes(const DescriptorMap& map, const Mlp<float>& net, const PipelineConfig& cfg) {
  if (map.dim() != net.arch().dim) {
    fail(ErrorCode::shape_mismatch, "descriptor dim does not match the network input");
  }
  const int stratum = strata_size(map.height(), map.width(), cfg.sampler.strata_divisor);
  VoteResult r;
  r.points = voting_points(map, cfg, stratum);

  Mlp<float>::Matrix inputs(map.dim(), static_cast<Eigen::Index>(r.points.size()));
  for (std::size_t j = 0; j < r.points.size(); ++j) {
    interpolate_descriptor(map, r.points[j],
                           std::span<float>(inputs.col(static_cast<Eigen::Index>(j)).data(),
                                            static_cast<std::size_t>(map.dim())));
  }
  r.predictions = predict_batch(net, inputs);

  if (r.points.size() >= 2) {
    const double max_dist = pair_max_distance(map.height(), map.width(), cfg.sampler.pair_distance_fraction);
    r.pairs = sample_pairs(r.points, max_dist, cfg.sampler.pair_count, mix_seed(cfg.sampler.seed, 2));
  }
  r.grid = accumulate(map.height(), map.width(), stratum, r.points, r.predictions, r.pairs, cfg.vote);
  return r;
}

inline Detection peak_to_detection(const VoteResult& votes, const Peak& p, const PipelineConfig& cfg) {
  std::optional<double> w = p.w;
  std::optional<double> h = p.h;
  if (cfg.vote.size_aggregation == SizeAggregation::at_peak) {
    const SizeEstimate e =
        size_at_center(p.center, votes.points, votes.predictions, votes.grid.cell(), cfg.vote);
    w = e.w;
    h = e.h;
  }
  if (!w || !h) fail(ErrorCode::no_size_evidence, "no size estimate around the peak");
  return {{p.center.x, p.center.y, *w, *h}, p.score};
}

/// Single most-voted box.
inline Detection localize(const DescriptorMap& map, const Mlp<float>& net, const PipelineConfig& cfg = {}) {
  const VoteResult votes = cast_votes(map, net, cfg);
  if (cfg.vote.size_aggregation == SizeAggregation::at_intersection) return find_peak(votes.grid);
  const auto peaks = find_peaks(votes.grid, 1, 0.0, 1);
  if (peaks.empty()) fail(ErrorCode::empty_grid, "no votes in the accumulator");
  return peak_to_detection(votes, peaks.front(), cfg);
}

inline std::vector<Detection> detect(const VoteResult& votes, const PipelineConfig& cfg, int nms_cells,
                                     double min_score, int max_instances) {
  std::vector<Detection> out;
  for (const Peak& p : find_peaks(votes.grid, nms_cells, min_score, max_instances)) {
    try {
      out.push_back(peak_to_detection(votes, p, cfg));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::no_size_evidence) throw;
    }
  }
  return out;
}

inline std::vector<Detection> detect(const DescriptorMap& map, const Mlp<float>& net, const PipelineConfig& cfg,
                                     int nms_cells, double min_score, int max_instances) {
  return detect(cast_votes(map, net, cfg), cfg, nms_cells, min_score, max_instances);
}

/// Detection with the configured NMS radius, instance cap and a score floor
/// of min_score_fraction * pair_count.
inline std::vector<Detection> detect(const DescriptorMap& map, const Mlp<float>& net, const PipelineConfig& cfg = {}) {
  return detect(map, net, cfg, cfg.nms_cells, cfg.min_score_fraction * cfg.sampler.pair_count, cfg.max_instances);
}

}  // namespace oneloc

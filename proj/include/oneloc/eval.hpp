#pragma once

// Box metrics: IoU, localization recall (per frame and mean over objects),
// and all-points-interpolated average precision for detection.

#include <algorithm>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "oneloc/error.hpp"
#include "oneloc/types.hpp"

namespace oneloc {

inline double iou(const BBox& a, const BBox& b) {
  const double iw = std::min(a.x1(), b.x1()) - std::max(a.x0(), b.x0());
  const double ih = std::min(a.y1(), b.y1()) - std::max(a.y0(), b.y0());
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

struct EvalRecord {
  std::string frame_id;
  std::string object_id;
  std::vector<Detection> predictions;
  std::vector<BBox> ground_truth;
};

/// Highest-scoring prediction of a localization record (first on ties).
inline const Detection& best_prediction(const EvalRecord& r) {
  if (r.predictions.empty()) fail(ErrorCode::missing_prediction, "no prediction for frame '" + r.frame_id + "'");
  return *std::max_element(r.predictions.begin(), r.predictions.end(),
                           [](const Detection& a, const Detection& b) { return a.score < b.score; });
}

/// Fraction of frames whose best prediction overlaps the first ground-truth
/// box with IoU >= threshold.
inline double recall_at(std::span<const EvalRecord> records, double threshold) {
  if (records.empty()) return 0.0;
  std::size_t hits = 0;
  for (const EvalRecord& r : records) {
    if (r.ground_truth.empty()) fail(ErrorCode::invalid_argument, "frame '" + r.frame_id + "' has no ground truth");
    if (iou(best_prediction(r).box, r.ground_truth.front()) >= threshold) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

/// Unweighted mean over objects of the per-object recall.
inline double mean_recall_at(std::span<const EvalRecord> records, double threshold) {
  std::map<std::string, std::vector<EvalRecord>> by_object;
  for (const EvalRecord& r : records) by_object[r.object_id].push_back(r);
  if (by_object.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& [id, recs] : by_object) sum += recall_at(recs, threshold);
  return sum / static_cast<double>(by_object.size());
}

/// Detections pooled over frames, ranked by descending score (stable on
/// ties), each greedily matched to the highest-IoU unmatched ground truth of
/// its frame with IoU >= threshold. AP integrates the monotone precision
/// envelope over recall.
inline double average_precision(std::span<const EvalRecord> records, double threshold) {
  struct Ranked {
    double score;
    std::size_t record;
    std::size_t det;
  };
  std::vector<Ranked> ranked;
  std::size_t total_gt = 0;
  for (std::size_t r = 0; r < records.size(); ++r) {
    total_gt += records[r].ground_truth.size();
    for (std::size_t d = 0; d < records[r].predictions.size(); ++d) {
      ranked.push_back({records[r].predictions[d].score, r, d});
    }
  }
  if (total_gt == 0) return 0.0;
  std::stable_sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) { return a.score > b.score; });

  std::vector<std::vector<bool>> used(records.size());
  for (std::size_t r = 0; r < records.size(); ++r) used[r].assign(records[r].ground_truth.size(), false);

  std::vector<double> recall;
  std::vector<double> precision;
  std::size_t tp = 0;
  for (std::size_t k = 0; k < ranked.size(); ++k) {
    const EvalRecord& rec = records[ranked[k].record];
    const BBox& box = rec.predictions[ranked[k].det].box;
    double best = -1.0;
    std::size_t best_g = 0;
    for (std::size_t g = 0; g < rec.ground_truth.size(); ++g) {
      if (used[ranked[k].record][g]) continue;
      const double v = iou(box, rec.ground_truth[g]);
      if (v >= threshold && v > best) {
        best = v;
        best_g = g;
      }
    }
    if (best >= 0.0) {
      used[ranked[k].record][best_g] = true;
      ++tp;
    }
    recall.push_back(static_cast<double>(tp) / static_cast<double>(total_gt));
    precision.push_back(static_cast<double>(tp) / static_cast<double>(k + 1));
  }

  // Sentinel-padded envelope, VOC style.
  std::vector<double> mrec{0.0};
  std::vector<double> mpre{0.0};
  mrec.insert(mrec.end(), recall.begin(), recall.end());
  mpre.insert(mpre.end(), precision.begin(), precision.end());
  mrec.push_back(1.0);
  mpre.push_back(0.0);
  for (std::size_t i = mpre.size() - 1; i > 0; --i) mpre[i - 1] = std::max(mpre[i - 1], mpre[i]);
  double ap = 0.0;
  for (std::size_t i = 1; i < mrec.size(); ++i) {
    if (mrec[i] != mrec[i - 1]) ap += (mrec[i] - mrec[i - 1]) * mpre[i];
  }
  return ap;
}

struct MetricsReport {
  std::string mode;  // "localization" or "detection"
  std::size_t frames = 0;
  std::size_t objects = 0;
  double at25 = 0.0;
  double at50 = 0.0;
};

inline MetricsReport localization_report(std::span<const EvalRecord> records) {
  std::map<std::string, int> objects;
  for (const EvalRecord& r : records) ++objects[r.object_id];
  return {"localization", records.size(), objects.size(), mean_recall_at(records, 0.25),
          mean_recall_at(records, 0.50)};
}

inline MetricsReport detection_report(std::span<const EvalRecord> records) {
  std::map<std::string, int> objects;
  for (const EvalRecord& r : records) ++objects[r.object_id];
  return {"detection", records.size(), objects.size(), average_precision(records, 0.25),
          average_precision(records, 0.50)};
}

}  // namespace oneloc

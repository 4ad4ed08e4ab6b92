#pragma once

// Targets, loss, optimizer and the training loop for the per-point predictor.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "oneloc/descriptor_map.hpp"
#include "oneloc/error.hpp"
#include "oneloc/geometry.hpp"
#include "oneloc/mlp.hpp"
#include "oneloc/rng.hpp"
#include "oneloc/sampling.hpp"
#include "oneloc/types.hpp"

namespace oneloc {

/// What the last two network outputs regress. `absolute` is the ablation
/// that regresses the box size itself, in units of `abs_size_unit` pixels.
enum class SizeTarget { relative, absolute };

struct TargetConfig {
  SizeTarget size_target = SizeTarget::relative;
  double abs_size_unit = 100.0;
};

/// Readings of the direction loss: (1 - cos)^2, (-cos)^2 and -cos^2.
enum class LossVariant { one_minus_cos_sq, neg_cos_sq, neg_sq_cos };

struct LossConfig {
  LossVariant variant = LossVariant::one_minus_cos_sq;
  double lambda = 1.0;
};

struct TrainSample {
  std::vector<float> descriptor;
  UnitDir target_dir;
  RelSize target_size;  // relative size, or size / abs_size_unit in absolute mode
};

using FrameSamples = std::vector<TrainSample>;

struct LabeledFrame {
  const DescriptorMap* map = nullptr;
  BBox box;
};

struct PointTarget {
  UnitDir dir;
  RelSize size;
};

/// Regression targets for in-box points. Points closer to the center than
/// the degenerate-point tolerance have no direction and are skipped.
inline std::vector<std::pair<std::size_t, PointTarget>> compute_targets(std::span<const Point2> points,
                                                                       const BBox& box,
                                                                       const TargetConfig& cfg = {}) {
  if (!box.valid()) fail(ErrorCode::invalid_size, "annotated box must have positive size");
  std::vector<std::pair<std::size_t, PointTarget>> out;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Point2 p = points[i];
    if (!box.contains(p)) continue;
    if (norm(p - box.center()) < kDegeneratePointEps) continue;
    PointTarget t;
    t.dir = center_direction(p, box.center());
    if (cfg.size_target == SizeTarget::relative) {
      t.size = relative_size(p, box.center(), box.size());
    } else {
      t.size = {box.w / cfg.abs_size_unit, box.h / cfg.abs_size_unit};
    }
    out.emplace_back(i, t);
  }
  return out;
}

/// Stratified points of one frame that fall inside its box, with
/// interpolated descriptors and targets.
inline FrameSamples make_frame_samples(const DescriptorMap& map, const BBox& box, const SamplerConfig& sampler,
                                       std::uint64_t seed, const TargetConfig& targets = {}) {
  const int stratum = strata_size(map.height(), map.width(), sampler.strata_divisor);
  std::vector<Point2> points = stratified_sample(map.height(), map.width(), stratum, seed);
  for (Point2& p : points) p = clamp_to_map(map, p);
  FrameSamples samples;
  for (const auto& [index, target] : compute_targets(points, box, targets)) {
    samples.push_back({interpolate_descriptor(map, points[index]), target.dir, target.size});
  }
  if (samples.empty()) fail(ErrorCode::empty_box, "no stratified point landed inside the annotated box");
  return samples;
}

/// Per-frame training samples; frame i samples with seed mix(sampler.seed, i).
inline std::vector<FrameSamples> make_training_set(std::span<const LabeledFrame> frames,
                                                   const SamplerConfig& sampler,
                                                   const TargetConfig& targets = {}) {
  std::vector<FrameSamples> out;
  out.reserve(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    out.push_back(make_frame_samples(*frames[i].map, frames[i].box, sampler, mix_seed(sampler.seed, i), targets));
  }
  return out;
}

namespace detail {

/// Direction loss term f(c) and its derivative f'(c).
inline std::pair<double, double> direction_term(double c, LossVariant v) {
  switch (v) {
    case LossVariant::one_minus_cos_sq: return {(1.0 - c) * (1.0 - c), -2.0 * (1.0 - c)};
    case LossVariant::neg_cos_sq: return {c * c, 2.0 * c};
    case LossVariant::neg_sq_cos: return {-c * c, -2.0 * c};
  }
  return {0.0, 0.0};
}

}  // namespace detail

/// Per-sample loss: f(cos(raw_dir, target_dir)) + lambda * |size - target|^2.
/// The cosine of a zero direction is taken as 0.
template <typename Scalar>
Scalar sample_loss(Scalar rx, Scalar ry, Scalar sx, Scalar sy, const TrainSample& t, const LossConfig& cfg = {}) {
  const double len = std::hypot(static_cast<double>(rx), static_cast<double>(ry));
  const double c = len > 0.0 ? (rx * t.target_dir.dx + ry * t.target_dir.dy) / len : 0.0;
  const double ex = static_cast<double>(sx) - t.target_size.sx;
  const double ey = static_cast<double>(sy) - t.target_size.sy;
  return static_cast<Scalar>(detail::direction_term(c, cfg.variant).first + cfg.lambda * (ex * ex + ey * ey));
}

inline double loss(Point2 raw_dir, RelSize size, const TrainSample& t, const LossConfig& cfg = {}) {
  return sample_loss<double>(raw_dir.x, raw_dir.y, size.sx, size.sy, t, cfg);
}

/// Packs descriptors into a dim x N matrix and targets into 4 x N.
template <typename Scalar>
void pack_batch(std::span<const TrainSample* const> samples, int dim, typename Mlp<Scalar>::Matrix& inputs,
                typename Mlp<Scalar>::Matrix& targets) {
  const auto n = static_cast<Eigen::Index>(samples.size());
  inputs.resize(dim, n);
  targets.resize(4, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const TrainSample& s = *samples[static_cast<std::size_t>(j)];
    if (static_cast<int>(s.descriptor.size()) != dim) fail(ErrorCode::shape_mismatch, "descriptor length mismatch");
    for (int i = 0; i < dim; ++i) inputs(i, j) = static_cast<Scalar>(s.descriptor[static_cast<std::size_t>(i)]);
    targets(0, j) = static_cast<Scalar>(s.target_dir.dx);
    targets(1, j) = static_cast<Scalar>(s.target_dir.dy);
    targets(2, j) = static_cast<Scalar>(s.target_size.sx);
    targets(3, j) = static_cast<Scalar>(s.target_size.sy);
  }
}

/// Mean loss over the batch; when `grad` is given, its gradient is
/// accumulated into it.
template <typename Scalar>
double batch_loss(const Mlp<Scalar>& net, const Eigen::Ref<const typename Mlp<Scalar>::Matrix>& inputs,
                  const Eigen::Ref<const typename Mlp<Scalar>::Matrix>& targets, const LossConfig& cfg,
                  Mlp<Scalar>* grad) {
  using Matrix = typename Mlp<Scalar>::Matrix;
  ForwardCache<Scalar> cache;
  const Matrix out = forward(net, inputs, grad ? &cache : nullptr);
  const Eigen::Index n = out.cols();
  if (n == 0) return 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  Matrix d_out(4, n);
  double total = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    const double rx = out(0, j);
    const double ry = out(1, j);
    const double tx = targets(0, j);
    const double ty = targets(1, j);
    const double len = std::hypot(rx, ry);
    double c = 0.0;
    double dcx = 0.0;
    double dcy = 0.0;
    if (len > 0.0) {
      const double dp = rx * tx + ry * ty;
      c = dp / len;
      const double len3 = len * len * len;
      dcx = tx / len - dp * rx / len3;
      dcy = ty / len - dp * ry / len3;
    }
    const auto [f, df] = detail::direction_term(c, cfg.variant);
    const double ex = static_cast<double>(out(2, j)) - targets(2, j);
    const double ey = static_cast<double>(out(3, j)) - targets(3, j);
    total += f + cfg.lambda * (ex * ex + ey * ey);
    d_out(0, j) = static_cast<Scalar>(inv_n * df * dcx);
    d_out(1, j) = static_cast<Scalar>(inv_n * df * dcy);
    d_out(2, j) = static_cast<Scalar>(inv_n * 2.0 * cfg.lambda * ex);
    d_out(3, j) = static_cast<Scalar>(inv_n * 2.0 * cfg.lambda * ey);
  }
  if (grad) backward(net, inputs, cache, d_out, *grad);
  return total * inv_n;
}

struct AdamConfig {
  double learning_rate = 3e-4;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with L2 weight decay folded into the gradient.
template <typename Scalar>
class Adam {
 public:
  Adam() = default;
  Adam(std::size_t n, AdamConfig cfg) : cfg_(cfg), m_(n, 0.0), v_(n, 0.0) {}

  void step(std::span<Scalar> params, std::span<const Scalar> grad) {
    if (params.size() != m_.size() || grad.size() != m_.size()) {
      fail(ErrorCode::shape_mismatch, "optimizer state does not match parameters");
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double g = static_cast<double>(grad[i]) + cfg_.weight_decay * static_cast<double>(params[i]);
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
      v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g * g;
      const double m_hat = m_[i] / bc1;
      const double v_hat = v_[i] / bc2;
      params[i] = static_cast<Scalar>(params[i] - cfg_.learning_rate * m_hat / (std::sqrt(v_hat) + cfg_.eps));
    }
  }

  long steps() const noexcept { return t_; }
  const AdamConfig& config() const noexcept { return cfg_; }

 private:
  AdamConfig cfg_{};
  std::vector<double> m_;
  std::vector<double> v_;
  long t_ = 0;
};

struct TrainConfig {
  AdamConfig adam;
  LossConfig loss;
  int epochs = 50;
  int frames_per_batch = 4;
  int hidden = 128;
  int blocks = 20;
  std::uint64_t seed = 0;
};

struct TrainResult {
  Mlp<float> weights;
  std::vector<double> epoch_loss;
  long steps = 0;
};

using EpochCallback = std::function<void(int epoch, double mean_loss)>;

/// Epochs over shuffled batches of `frames_per_batch` frames; all samples of
/// a batch are pooled into a single optimizer step.
inline TrainResult train(std::span<const FrameSamples> frames, const TrainConfig& cfg,
                         const EpochCallback& on_epoch = {}) {
  if (frames.empty()) fail(ErrorCode::invalid_argument, "training needs at least one frame");
  if (cfg.epochs < 1 || cfg.frames_per_batch < 1) fail(ErrorCode::invalid_argument, "epochs and batch size must be >= 1");
  int dim = 0;
  for (const FrameSamples& f : frames) {
    if (f.empty()) fail(ErrorCode::empty_box, "training frame has no samples");
    dim = static_cast<int>(f.front().descriptor.size());
  }
  const Architecture arch{dim, cfg.hidden, cfg.blocks};
  TrainResult result{Mlp<float>::random(arch, cfg.seed), {}, 0};
  Mlp<float> grad(arch);
  Adam<float> adam(arch.parameter_count(), cfg.adam);
  Rng rng = make_rng(cfg.seed, 1);

  std::vector<std::size_t> order(frames.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Mlp<float>::Matrix inputs;
  Mlp<float>::Matrix targets;
  std::vector<const TrainSample*> batch;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t sample_count = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.frames_per_batch)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.frames_per_batch));
      batch.clear();
      for (std::size_t k = start; k < stop; ++k) {
        for (const TrainSample& s : frames[order[k]]) batch.push_back(&s);
      }
      pack_batch<float>(batch, dim, inputs, targets);
      grad.set_zero();
      const double l = batch_loss(result.weights, inputs, targets, cfg.loss, &grad);
      adam.step(result.weights.parameters(), grad.parameters());
      loss_sum += l * static_cast<double>(batch.size());
      sample_count += batch.size();
    }
    const double mean = loss_sum / static_cast<double>(sample_count);
    result.epoch_loss.push_back(mean);
    if (on_epoch) on_epoch(epoch + 1, mean);
  }
  result.steps = adam.steps();
  return result;
}

struct Prediction {
  UnitDir dir;
  RelSize size;
  bool valid = false;
};

inline constexpr double kMinDirectionNorm = 1e-6;

/// Normalizes a raw direction output; throws DegenerateDirection when it is
/// too short to define a direction.
inline Prediction predict_from_raw(double rx, double ry, double sx, double sy) {
  const double len = std::hypot(rx, ry);
  if (!(len > kMinDirectionNorm)) fail(ErrorCode::degenerate_direction, "predicted direction has ~zero length");
  return {{rx / len, ry / len}, {sx, sy}, true};
}

template <typename Scalar>
Prediction predict(const Mlp<Scalar>& net, std::span<const float> descriptor) {
  const auto out = forward(net, descriptor);
  return predict_from_raw(out(0, 0), out(1, 0), out(2, 0), out(3, 0));
}

/// Batched inference over descriptor columns; degenerate outputs come back
/// with valid == false instead of throwing.
template <typename Scalar>
std::vector<Prediction> predict_batch(const Mlp<Scalar>& net,
                                      const Eigen::Ref<const typename Mlp<Scalar>::Matrix>& inputs) {
  const auto out = forward(net, inputs);
  std::vector<Prediction> preds(static_cast<std::size_t>(out.cols()));
  for (Eigen::Index j = 0; j < out.cols(); ++j) {
    const double rx = out(0, j);
    const double ry = out(1, j);
    const double len = std::hypot(rx, ry);
    if (len > kMinDirectionNorm) {
      preds[static_cast<std::size_t>(j)] = {{rx / len, ry / len}, {double(out(2, j)), double(out(3, j))}, true};
    }
  }
  return preds;
}

}  // namespace oneloc

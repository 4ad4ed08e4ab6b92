#pragma once

// Residual fully connected predictor: descriptor -> (raw center direction,
// relative size). All parameters live in one flat buffer in the same order
// as the weights file:
//
//   input weight  (hidden x dim, row-major), input bias (hidden)
//   per block k:  weight (hidden x hidden, row-major), bias (hidden)
//   head weight   (4 x hidden, row-major), head bias (4)

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "oneloc/error.hpp"
#include "oneloc/rng.hpp"

namespace oneloc {

struct Architecture {
  int dim = 256;
  int hidden = 128;
  int blocks = 20;
  static constexpr int outputs = 4;

  std::size_t parameter_count() const {
    const std::size_t d = static_cast<std::size_t>(dim);
    const std::size_t h = static_cast<std::size_t>(hidden);
    return h * d + h + static_cast<std::size_t>(blocks) * (h * h + h) + outputs * h + outputs;
  }
  friend bool operator==(const Architecture&, const Architecture&) = default;
};

template <typename Scalar>
class Mlp {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using MatrixMap = Eigen::Map<RowMatrix>;
  using ConstMatrixMap = Eigen::Map<const RowMatrix>;
  using VectorMap = Eigen::Map<Vector>;
  using ConstVectorMap = Eigen::Map<const Vector>;

  Mlp() = default;

  /// All-zero parameters.
  explicit Mlp(Architecture arch) : arch_(arch) {
    if (arch.dim < 1 || arch.hidden < 1 || arch.blocks < 0) {
      fail(ErrorCode::shape_mismatch, "invalid architecture");
    }
    params_.assign(arch.parameter_count(), Scalar(0));
  }

  Mlp(Architecture arch, const std::vector<Scalar>& params) : arch_(arch), params_(params.begin(), params.end()) {
    if (params_.size() != arch_.parameter_count()) {
      fail(ErrorCode::shape_mismatch, "parameter buffer does not match architecture");
    }
  }

  /// He-style init; residual branches are scaled by 1/sqrt(blocks) so the
  /// activation scale stays bounded through the stack.
  static Mlp random(Architecture arch, std::uint64_t seed) {
    Mlp m(arch);
    Rng rng = make_rng(seed, 0x5eed);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto fill = [&](auto block, double stddev) {
      for (Eigen::Index i = 0; i < block.size(); ++i) block.data()[i] = static_cast<Scalar>(stddev * normal(rng));
    };
    fill(m.input_weight(), std::sqrt(2.0 / arch.dim));
    const double block_std = std::sqrt(2.0 / arch.hidden) / std::sqrt(std::max(arch.blocks, 1));
    for (int k = 0; k < arch.blocks; ++k) fill(m.block_weight(k), block_std);
    fill(m.head_weight(), std::sqrt(1.0 / arch.hidden));
    return m;
  }

  const Architecture& arch() const noexcept { return arch_; }
  std::span<Scalar> parameters() noexcept { return params_; }
  std::span<const Scalar> parameters() const noexcept { return params_; }

  MatrixMap input_weight() { return {ptr(input_weight_offset()), arch_.hidden, arch_.dim}; }
  ConstMatrixMap input_weight() const { return {ptr(input_weight_offset()), arch_.hidden, arch_.dim}; }
  VectorMap input_bias() { return {ptr(input_bias_offset()), arch_.hidden}; }
  ConstVectorMap input_bias() const { return {ptr(input_bias_offset()), arch_.hidden}; }
  MatrixMap block_weight(int k) { return {ptr(block_offset(k)), arch_.hidden, arch_.hidden}; }
  ConstMatrixMap block_weight(int k) const { return {ptr(block_offset(k)), arch_.hidden, arch_.hidden}; }
  VectorMap block_bias(int k) { return {ptr(block_offset(k) + hh()), arch_.hidden}; }
  ConstVectorMap block_bias(int k) const { return {ptr(block_offset(k) + hh()), arch_.hidden}; }
  MatrixMap head_weight() { return {ptr(head_offset()), Architecture::outputs, arch_.hidden}; }
  ConstMatrixMap head_weight() const { return {ptr(head_offset()), Architecture::outputs, arch_.hidden}; }
  VectorMap head_bias() { return {ptr(head_offset() + 4 * h()), Architecture::outputs}; }
  ConstVectorMap head_bias() const { return {ptr(head_offset() + 4 * h()), Architecture::outputs}; }

  template <typename Other>
  Mlp<Other> cast() const {
    std::vector<Other> p(params_.size());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = static_cast<Other>(params_[i]);
    return Mlp<Other>(arch_, std::move(p));
  }

  bool all_finite() const {
    for (Scalar v : params_) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }

  void set_zero() { std::fill(params_.begin(), params_.end(), Scalar(0)); }

 private:
  std::size_t h() const { return static_cast<std::size_t>(arch_.hidden); }
  std::size_t hh() const { return h() * h(); }
  std::size_t input_weight_offset() const { return 0; }
  std::size_t input_bias_offset() const { return h() * static_cast<std::size_t>(arch_.dim); }
  std::size_t block_offset(int k) const {
    return input_bias_offset() + h() + static_cast<std::size_t>(k) * (hh() + h());
  }
  std::size_t head_offset() const { return block_offset(arch_.blocks); }
  Scalar* ptr(std::size_t off) { return params_.data() + off; }
  const Scalar* ptr(std::size_t off) const { return params_.data() + off; }

  Architecture arch_{};
  // Aligned so vectorized kernels split work the same way on every run.
  std::vector<Scalar, Eigen::aligned_allocator<Scalar>> params_;
};

/// Pre-activations kept for the backward pass. pre[0] is the input
/// projection, pre[k + 1] belongs to block k; states[k] is the hidden state
/// entering block k (states[blocks] feeds the head).
template <typename Scalar>
struct ForwardCache {
  using Matrix = typename Mlp<Scalar>::Matrix;
  std::vector<Matrix> pre;
  std::vector<Matrix> states;
};

/// Batched forward pass. `inputs` holds one descriptor per column; returns a
/// 4 x N matrix: rows 0-1 raw direction, rows 2-3 size.
template <typename Scalar>
typename Mlp<Scalar>::Matrix forward(const Mlp<Scalar>& net,
                                     const Eigen::Ref<const typename Mlp<Scalar>::Matrix>& inputs,
                                     ForwardCache<Scalar>* cache = nullptr) {
  using Matrix = typename Mlp<Scalar>::Matrix;
  const Architecture& arch = net.arch();
  if (inputs.rows() != arch.dim) {
    fail(ErrorCode::shape_mismatch, "descriptor length " + std::to_string(inputs.rows()) +
                                        " does not match network input " + std::to_string(arch.dim));
  }
  if (cache) {
    cache->pre.clear();
    cache->states.clear();
  }
  Matrix z = net.input_weight() * inputs;
  z.colwise() += net.input_bias();
  Matrix state = z.cwiseMax(Scalar(0));
  if (cache) cache->pre.push_back(std::move(z));
  for (int k = 0; k < arch.blocks; ++k) {
    Matrix zk = net.block_weight(k) * state;
    zk.colwise() += net.block_bias(k);
    if (cache) cache->states.push_back(state);
    state += zk.cwiseMax(Scalar(0));
    if (cache) cache->pre.push_back(std::move(zk));
  }
  Matrix out = net.head_weight() * state;
  out.colwise() += net.head_bias();
  if (cache) cache->states.push_back(std::move(state));
  return out;
}

template <typename Scalar>
typename Mlp<Scalar>::Matrix forward(const Mlp<Scalar>& net, std::span<const float> descriptor) {
  typename Mlp<Scalar>::Matrix x(static_cast<Eigen::Index>(descriptor.size()), 1);
  for (std::size_t i = 0; i < descriptor.size(); ++i) x(static_cast<Eigen::Index>(i), 0) = static_cast<Scalar>(descriptor[i]);
  return forward(net, x);
}

/// Reverse pass for forward(). `d_out` is dLoss/dOutput (4 x N); gradients
/// are accumulated into `grad`, which must share the architecture.
template <typename Scalar>
void backward(const Mlp<Scalar>& net, const Eigen::Ref<const typename Mlp<Scalar>::Matrix>& inputs,
              const ForwardCache<Scalar>& cache, const Eigen::Ref<const typename Mlp<Scalar>::Matrix>& d_out,
              Mlp<Scalar>& grad) {
  using Matrix = typename Mlp<Scalar>::Matrix;
  const Architecture& arch = net.arch();
  if (!(grad.arch() == arch)) fail(ErrorCode::shape_mismatch, "gradient buffer architecture mismatch");
  const int blocks = arch.blocks;

  grad.head_weight() += d_out * cache.states[static_cast<std::size_t>(blocks)].transpose();
  grad.head_bias() += d_out.rowwise().sum();
  Matrix d_state = net.head_weight().transpose() * d_out;

  for (int k = blocks - 1; k >= 0; --k) {
    const Matrix& zk = cache.pre[static_cast<std::size_t>(k) + 1];
    const Matrix d_z = (zk.array() > Scalar(0)).select(d_state, Scalar(0));
    grad.block_weight(k) += d_z * cache.states[static_cast<std::size_t>(k)].transpose();
    grad.block_bias(k) += d_z.rowwise().sum();
    d_state.noalias() += net.block_weight(k).transpose() * d_z;
  }

  const Matrix d_z0 = (cache.pre[0].array() > Scalar(0)).select(d_state, Scalar(0));
  grad.input_weight() += d_z0 * inputs.transpose();
  grad.input_bias() += d_z0.rowwise().sum();
}

}  // namespace oneloc

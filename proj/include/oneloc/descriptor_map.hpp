#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "oneloc/error.hpp"

namespace oneloc {

/// Dense per-pixel descriptor field with an optional keypoint score field.
/// Storage is row-major: row, then column, then channel.
class DescriptorMap {
 public:
  DescriptorMap() = default;

  DescriptorMap(int height, int width, int dim)
      : height_(height), width_(width), dim_(dim) {
    check_shape();
    data_.assign(pixel_count() * static_cast<std::size_t>(dim_), 0.0f);
  }

  DescriptorMap(int height, int width, int dim, std::vector<float> data,
                std::optional<std::vector<float>> scores = std::nullopt)
      : height_(height), width_(width), dim_(dim), data_(std::move(data)), scores_(std::move(scores)) {
    check_shape();
    if (data_.size() != pixel_count() * static_cast<std::size_t>(dim_)) {
      fail(ErrorCode::shape_mismatch, "descriptor payload length does not match height*width*dim");
    }
    if (scores_) check_scores(*scores_);
  }

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  int dim() const noexcept { return dim_; }
  std::size_t pixel_count() const noexcept {
    return static_cast<std::size_t>(height_) * static_cast<std::size_t>(width_);
  }

  std::span<const float> data() const noexcept { return data_; }
  std::span<float> data() noexcept { return data_; }

  std::span<const float> at(int row, int col) const noexcept {
    return {data_.data() + offset(row, col), static_cast<std::size_t>(dim_)};
  }
  std::span<float> at(int row, int col) noexcept {
    return {data_.data() + offset(row, col), static_cast<std::size_t>(dim_)};
  }

  bool has_scores() const noexcept { return scores_.has_value(); }
  const std::vector<float>& scores() const {
    if (!scores_) fail(ErrorCode::no_score_map, "descriptor map has no score map");
    return *scores_;
  }
  float score(int row, int col) const {
    return scores()[static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) +
                    static_cast<std::size_t>(col)];
  }
  void set_scores(std::vector<float> scores) {
    if (scores.size() != pixel_count()) {
      fail(ErrorCode::shape_mismatch, "score map length does not match height*width");
    }
    check_scores(scores);
    scores_ = std::move(scores);
  }
  void clear_scores() { scores_.reset(); }

 private:
  std::size_t offset(int row, int col) const noexcept {
    return (static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) +
            static_cast<std::size_t>(col)) *
           static_cast<std::size_t>(dim_);
  }

  void check_shape() const {
    if (height_ < 1 || width_ < 1 || dim_ < 1) {
      fail(ErrorCode::shape_mismatch, "descriptor map dimensions must be positive");
    }
  }

  void check_scores(const std::vector<float>& scores) const {
    if (scores.size() != pixel_count()) {
      fail(ErrorCode::shape_mismatch, "score map length does not match height*width");
    }
    for (float s : scores) {
      if (!(s >= 0.0f && s <= 1.0f)) fail(ErrorCode::shape_mismatch, "score outside [0, 1]");
    }
  }

  int height_ = 0;
  int width_ = 0;
  int dim_ = 0;
  std::vector<float> data_;
  std::optional<std::vector<float>> scores_;
};

}  // namespace oneloc

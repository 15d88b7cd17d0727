#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "lfm/errors.hpp"

namespace lfm {

/// Dense 4-D activation array laid out [sample][channel][row][column].
template <typename T>
class FeatureBlock {
 public:
  FeatureBlock() = default;
  FeatureBlock(std::size_t batch, std::size_t channels, std::size_t height, std::size_t width,
               T fill = T{0})
      : b_(batch), c_(channels), h_(height), w_(width), data_(batch * channels * height * width, fill) {
    if (batch == 0 || channels == 0 || height == 0 || width == 0)
      throw StructuralError("FeatureBlock dims must all be >= 1");
  }

  std::size_t batch() const noexcept { return b_; }
  std::size_t channels() const noexcept { return c_; }
  std::size_t height() const noexcept { return h_; }
  std::size_t width() const noexcept { return w_; }
  std::size_t plane() const noexcept { return h_ * w_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  bool same_shape(const FeatureBlock& o) const noexcept {
    return b_ == o.b_ && c_ == o.c_ && h_ == o.h_ && w_ == o.w_;
  }
  std::string shape_string() const {
    return "(" + std::to_string(b_) + "," + std::to_string(c_) + "," + std::to_string(h_) + "," +
           std::to_string(w_) + ")";
  }

  T& operator()(std::size_t b, std::size_t c, std::size_t y, std::size_t x) {
    return data_[((b * c_ + c) * h_ + y) * w_ + x];
  }
  const T& operator()(std::size_t b, std::size_t c, std::size_t y, std::size_t x) const {
    return data_[((b * c_ + c) * h_ + y) * w_ + x];
  }

  std::span<T> channel(std::size_t b, std::size_t c) {
    return {data_.data() + (b * c_ + c) * plane(), plane()};
  }
  std::span<const T> channel(std::size_t b, std::size_t c) const {
    return {data_.data() + (b * c_ + c) * plane(), plane()};
  }
  std::span<T> sample(std::size_t b) { return {data_.data() + b * c_ * plane(), c_ * plane()}; }
  std::span<const T> sample(std::size_t b) const {
    return {data_.data() + b * c_ * plane(), c_ * plane()};
  }

  std::vector<T>& values() noexcept { return data_; }
  const std::vector<T>& values() const noexcept { return data_; }
  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  template <typename U>
  FeatureBlock<U> cast() const {
    FeatureBlock<U> out(b_, c_, h_, w_);
    std::transform(data_.begin(), data_.end(), out.values().begin(),
                   [](T v) { return static_cast<U>(v); });
    return out;
  }

  /// Copies samples [first, first + count) into a new block.
  FeatureBlock slice(std::size_t first, std::size_t count) const {
    FeatureBlock out(count, c_, h_, w_);
    std::copy_n(data_.begin() + first * c_ * plane(), count * c_ * plane(), out.data_.begin());
    return out;
  }

  friend bool operator==(const FeatureBlock& a, const FeatureBlock& b) {
    return a.same_shape(b) && a.data_ == b.data_;
  }

 private:
  std::size_t b_ = 0, c_ = 0, h_ = 0, w_ = 0;
  std::vector<T> data_;
};

}  // namespace lfm

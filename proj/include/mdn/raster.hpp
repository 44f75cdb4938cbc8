#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mdn/error.hpp"

namespace mdn {

// Interleaved row-major raster: element (x, y, c) lives at ((y * width + x) * channels + c).
template <typename T>
class Raster {
 public:
  using value_type = T;

  Raster() = default;

  Raster(int width, int height, int channels, T fill = T{})
      : width_(width), height_(height), channels_(channels) {
    require(width >= 1 && height >= 1 && channels >= 1, Errc::InvalidArgument,
            "raster dimensions must be positive");
    data_.assign(size(), fill);
  }

  Raster(int width, int height, int channels, std::vector<T> data)
      : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
    require(width >= 1 && height >= 1 && channels >= 1, Errc::InvalidArgument,
            "raster dimensions must be positive");
    require(data_.size() == size(), Errc::DimensionMismatch,
            "pixel array length " + std::to_string(data_.size()) + " != " +
                std::to_string(size()));
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int channels() const noexcept { return channels_; }
  std::size_t size() const noexcept {
    return static_cast<std::size_t>(width_) * height_ * channels_;
  }
  bool empty() const noexcept { return data_.empty(); }

  std::size_t index(int x, int y, int c = 0) const noexcept {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }
  T& operator()(int x, int y, int c = 0) noexcept { return data_[index(x, y, c)]; }
  const T& operator()(int x, int y, int c = 0) const noexcept { return data_[index(x, y, c)]; }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  bool same_shape(const Raster& other) const noexcept {
    return width_ == other.width_ && height_ == other.height_ && channels_ == other.channels_;
  }

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<T> data_;
};

}  // namespace mdn

#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Core>

namespace mdn::nn {

// Vectorized reductions in Eigen peel a data-dependent number of leading
// elements when a buffer is misaligned, which changes the summation order.
// A fixed alignment keeps every run bit-reproducible.
template <typename T>
using Buffer = std::vector<T, Eigen::aligned_allocator<T>>;

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

// Planar single-sample activation: element (c, y, x) at (c * h + y) * w + x.
template <typename T>
struct Tensor {
  int c = 0, h = 0, w = 0;
  Buffer<T> data;

  Tensor() = default;
  Tensor(int channels, int height, int width) { reshape(channels, height, width); }

  // Keeps capacity so workspaces can be reused across samples without reallocating.
  void reshape(int channels, int height, int width) {
    c = channels;
    h = height;
    w = width;
    data.resize(size());
  }
  void zero() { std::fill(data.begin(), data.end(), T(0)); }

  std::size_t plane() const noexcept { return std::size_t(h) * w; }
  std::size_t size() const noexcept { return std::size_t(c) * plane(); }
  T* channel(int ch) noexcept { return data.data() + std::size_t(ch) * plane(); }
  const T* channel(int ch) const noexcept { return data.data() + std::size_t(ch) * plane(); }

  MatMap<T> mat() { return MatMap<T>(data.data(), c, Eigen::Index(plane())); }
  ConstMatMap<T> mat() const { return ConstMatMap<T>(data.data(), c, Eigen::Index(plane())); }

  bool same_shape(const Tensor& o) const noexcept { return c == o.c && h == o.h && w == o.w; }
};

}  // namespace mdn::nn

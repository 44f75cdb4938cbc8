#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "mdn/core.hpp"

namespace mdn {

enum class NormalizationMode { Global, PerChannel };

constexpr std::string_view to_string(NormalizationMode m) {
  return m == NormalizationMode::Global ? "global" : "per_channel";
}

inline NormalizationMode normalization_mode_from_string(std::string_view s) {
  if (s == "global") return NormalizationMode::Global;
  if (s == "per_channel") return NormalizationMode::PerChannel;
  fail(Errc::ParseError, "unknown normalization_mode '" + std::string(s) + "'");
}

// Min-max scaling to [0,1]. A zero-range image (or channel) maps to all zeros.
inline FluorescenceImage normalize(const FluorescenceImage& image,
                                   NormalizationMode mode = NormalizationMode::Global) {
  require(!image.normalized(), Errc::AlreadyNormalized, "image is already normalized");
  const auto& src = image.pixels();
  Raster<float> out(src.width(), src.height(), src.channels());
  const int groups = mode == NormalizationMode::Global ? 1 : src.channels();
  for (int g = 0; g < groups; ++g) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t i = 0; i < src.size(); ++i) {
      if (groups > 1 && int(i % src.channels()) != g) continue;
      lo = std::min(lo, double(src.storage()[i]));
      hi = std::max(hi, double(src.storage()[i]));
    }
    const double range = hi - lo;
    for (std::size_t i = 0; i < src.size(); ++i) {
      if (groups > 1 && int(i % src.channels()) != g) continue;
      out.storage()[i] = range > 0.0 ? float((src.storage()[i] - lo) / range) : 0.0f;
    }
  }
  return FluorescenceImage(std::move(out), true, image.scale_um_per_px());
}

// Bilinear resampling with corner-aligned sampling: output corners land
// exactly on input corners.
template <typename T>
Raster<float> resize_bilinear(const Raster<T>& src, int out_w, int out_h) {
  require(out_w >= 1 && out_h >= 1, Errc::InvalidArgument, "resize target must be >= 1");
  Raster<float> out(out_w, out_h, src.channels());
  const double sx = out_w > 1 ? double(src.width() - 1) / (out_w - 1) : 0.0;
  const double sy = out_h > 1 ? double(src.height() - 1) / (out_h - 1) : 0.0;
  for (int y = 0; y < out_h; ++y) {
    const double fy = y * sy;
    const int y0 = std::min(int(fy), src.height() - 1);
    const int y1 = std::min(y0 + 1, src.height() - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double fx = x * sx;
      const int x0 = std::min(int(fx), src.width() - 1);
      const int x1 = std::min(x0 + 1, src.width() - 1);
      const double wx = fx - x0;
      for (int c = 0; c < src.channels(); ++c) {
        const double top = (1.0 - wx) * double(src(x0, y0, c)) + wx * double(src(x1, y0, c));
        const double bot = (1.0 - wx) * double(src(x0, y1, c)) + wx * double(src(x1, y1, c));
        out(x, y, c) = float((1.0 - wy) * top + wy * bot);
      }
    }
  }
  return out;
}

// Raw inputs stay on the integer grid after resizing (values are rounded).
inline FluorescenceImage resize(const FluorescenceImage& image, int target) {
  require(target >= 1, Errc::InvalidArgument, "resize target must be >= 1");
  auto out = resize_bilinear(image.pixels(), target, target);
  if (image.normalized()) {
    for (auto& v : out.storage()) v = std::clamp(v, 0.0f, 1.0f);
  } else {
    for (auto& v : out.storage()) v = std::clamp(std::round(v), 0.0f, 255.0f);
  }
  return FluorescenceImage(std::move(out), image.normalized(), image.scale_um_per_px());
}

// Nearest neighbour with half-pixel centres: out[i] = in[floor((i + 0.5) * in / out)].
template <typename T>
Raster<T> resize_nearest(const Raster<T>& src, int out_w, int out_h) {
  require(out_w >= 1 && out_h >= 1, Errc::InvalidArgument, "resize target must be >= 1");
  Raster<T> out(out_w, out_h, src.channels());
  for (int y = 0; y < out_h; ++y) {
    const int sy = std::min(int((y + 0.5) * src.height() / out_h), src.height() - 1);
    for (int x = 0; x < out_w; ++x) {
      const int sx = std::min(int((x + 0.5) * src.width() / out_w), src.width() - 1);
      for (int c = 0; c < src.channels(); ++c) out(x, y, c) = src(sx, sy, c);
    }
  }
  return out;
}

inline BinaryMask resize_mask(const BinaryMask& mask, int target) {
  return BinaryMask(resize_nearest(mask.labels(), target, target));
}

// Padding that brings w and h up to the next multiple of p. Already divisible
// dimensions get zero padding, so 0 <= pad < p.
inline std::pair<int, int> compute_padding(int w, int h, int p) {
  require(w >= 1 && h >= 1 && p >= 1, Errc::InvalidArgument, "w, h and p must be >= 1");
  return {(p - w % p) % p, (p - h % p) % p};
}

inline PatchGrid make_grid(int w, int h, int p) {
  auto [pw, ph] = compute_padding(w, h, p);
  PatchGrid g;
  g.patch_size = p;
  g.original_w = w;
  g.original_h = h;
  g.pad_w = pw;
  g.pad_h = ph;
  g.cols = (w + pw) / p;
  g.rows = (h + ph) / p;
  return g;
}

template <typename T>
struct Padded {
  Raster<T> raster;
  PatchGrid grid;
};

// Appends pad_w columns on the right and pad_h rows at the bottom, filled with zero.
template <typename T>
Padded<T> pad(const Raster<T>& src, int pad_w, int pad_h, int patch_size) {
  require(pad_w >= 0 && pad_h >= 0, Errc::InvalidArgument, "padding must be non-negative");
  PatchGrid grid;
  grid.patch_size = patch_size;
  grid.original_w = src.width();
  grid.original_h = src.height();
  grid.pad_w = pad_w;
  grid.pad_h = pad_h;
  grid.cols = patch_size > 0 ? grid.padded_w() / patch_size : 0;
  grid.rows = patch_size > 0 ? grid.padded_h() / patch_size : 0;
  require(grid.valid(), Errc::GridMismatch, "padding does not align to the patch size");
  Raster<T> out(grid.padded_w(), grid.padded_h(), src.channels(), T{});
  const std::size_t row = std::size_t(src.width()) * src.channels();
  for (int y = 0; y < src.height(); ++y)
    std::copy_n(src.storage().begin() + std::ptrdiff_t(y * row), row,
                out.storage().begin() + std::ptrdiff_t(out.index(0, y)));
  return {std::move(out), grid};
}

template <typename T>
Padded<T> pad(const Raster<T>& src, int patch_size) {
  auto [pw, ph] = compute_padding(src.width(), src.height(), patch_size);
  return pad(src, pw, ph, patch_size);
}

// Row-major P x P patches of a padded raster.
template <typename T>
std::vector<Raster<T>> tile(const Raster<T>& padded, const PatchGrid& grid) {
  require(grid.valid(), Errc::GridMismatch, "invalid patch grid");
  require(padded.width() == grid.padded_w() && padded.height() == grid.padded_h(),
          Errc::GridMismatch, "raster dimensions do not match the grid");
  const int p = grid.patch_size;
  const int ch = padded.channels();
  std::vector<Raster<T>> patches;
  patches.reserve(std::size_t(grid.patch_count()));
  for (int r = 0; r < grid.rows; ++r) {
    for (int c = 0; c < grid.cols; ++c) {
      Raster<T> patch(p, p, ch);
      for (int y = 0; y < p; ++y) {
        auto first = padded.storage().begin() + std::ptrdiff_t(padded.index(c * p, r * p + y));
        std::copy_n(first, std::size_t(p) * ch,
                    patch.storage().begin() + std::ptrdiff_t(patch.index(0, y)));
      }
      patches.push_back(std::move(patch));
    }
  }
  return patches;
}

// Inverse of pad + tile: reassembles row-major patches and crops the padding.
template <typename T>
Raster<T> stitch(const std::vector<Raster<T>>& patches, const PatchGrid& grid) {
  require(grid.valid(), Errc::GridMismatch, "invalid patch grid");
  require(patches.size() == std::size_t(grid.patch_count()), Errc::PatchCountMismatch,
          "expected " + std::to_string(grid.patch_count()) + " patches, got " +
              std::to_string(patches.size()));
  const int p = grid.patch_size;
  const int ch = patches.front().channels();
  Raster<T> out(grid.original_w, grid.original_h, ch);
  for (int r = 0; r < grid.rows; ++r) {
    for (int c = 0; c < grid.cols; ++c) {
      const auto& patch = patches[std::size_t(r * grid.cols + c)];
      require(patch.width() == p && patch.height() == p && patch.channels() == ch,
              Errc::GridMismatch, "patch has the wrong shape");
      const int x0 = c * p;
      const int w = std::min(p, grid.original_w - x0);
      if (w <= 0) continue;
      for (int y = 0; y < p; ++y) {
        const int oy = r * p + y;
        if (oy >= grid.original_h) break;
        std::copy_n(patch.storage().begin() + std::ptrdiff_t(patch.index(0, y)),
                    std::size_t(w) * ch,
                    out.storage().begin() + std::ptrdiff_t(out.index(x0, oy)));
      }
    }
  }
  return out;
}

}  // namespace mdn

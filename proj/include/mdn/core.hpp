#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mdn/error.hpp"
#include "mdn/raster.hpp"

namespace mdn {

inline constexpr int kImageChannels = 3;
inline constexpr double kDefaultScaleUmPerPx = 5.0;

// Model input raster. Values are either raw 8-bit levels held as floats
// (integral, [0,255]) or normalized reals in [0,1].
class FluorescenceImage {
 public:
  FluorescenceImage() = default;

  FluorescenceImage(Raster<float> pixels, bool normalized,
                    double scale_um_per_px = kDefaultScaleUmPerPx)
      : pixels_(std::move(pixels)), normalized_(normalized), scale_(scale_um_per_px) {
    require(pixels_.channels() == kImageChannels, Errc::DimensionMismatch,
            "fluorescence images carry exactly 3 channels");
    require(scale_ > 0.0 && std::isfinite(scale_), Errc::ValueOutOfRange,
            "scale_um_per_px must be positive");
    for (float v : pixels_.values()) {
      if (normalized_) {
        require(v >= 0.0f && v <= 1.0f, Errc::ValueOutOfRange,
                "normalized intensity outside [0,1]");
      } else {
        require(v >= 0.0f && v <= 255.0f && v == std::floor(v), Errc::ValueOutOfRange,
                "raw intensity must be an integer in [0,255]");
      }
    }
  }

  static FluorescenceImage from_bytes(int width, int height, std::span<const std::uint8_t> rgb,
                                      double scale_um_per_px = kDefaultScaleUmPerPx) {
    std::vector<float> v(rgb.begin(), rgb.end());
    return FluorescenceImage(Raster<float>(width, height, kImageChannels, std::move(v)), false,
                             scale_um_per_px);
  }

  int width() const noexcept { return pixels_.width(); }
  int height() const noexcept { return pixels_.height(); }
  int channels() const noexcept { return pixels_.channels(); }
  bool normalized() const noexcept { return normalized_; }
  double scale_um_per_px() const noexcept { return scale_; }
  const Raster<float>& pixels() const noexcept { return pixels_; }

  friend bool operator==(const FluorescenceImage&, const FluorescenceImage&) = default;

 private:
  Raster<float> pixels_;
  bool normalized_ = false;
  double scale_ = kDefaultScaleUmPerPx;
};

// Per-pixel labels in {0,1}; 1 marks microplastic.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int width, int height, std::uint8_t fill = 0) : labels_(width, height, 1, fill) {
    require(fill <= 1, Errc::ValueOutOfRange, "mask values must be 0 or 1");
  }
  explicit BinaryMask(Raster<std::uint8_t> labels) : labels_(std::move(labels)) {
    require(labels_.channels() == 1, Errc::DimensionMismatch, "masks are single-channel");
    for (auto v : labels_.values())
      require(v <= 1, Errc::ValueOutOfRange,
              "mask value " + std::to_string(int(v)) + " not in {0,1}");
  }

  int width() const noexcept { return labels_.width(); }
  int height() const noexcept { return labels_.height(); }
  std::uint8_t operator()(int x, int y) const noexcept { return labels_(x, y); }
  const Raster<std::uint8_t>& labels() const noexcept { return labels_; }

  std::size_t count_ones() const noexcept {
    return static_cast<std::size_t>(std::count(labels_.values().begin(), labels_.values().end(),
                                               std::uint8_t{1}));
  }

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  Raster<std::uint8_t> labels_;
};

// Tiling geometry for P x P patch inference. Padding goes on the right and bottom.
struct PatchGrid {
  int patch_size = 256;
  int original_w = 0;
  int original_h = 0;
  int pad_w = 0;
  int pad_h = 0;
  int rows = 0;
  int cols = 0;

  int padded_w() const noexcept { return original_w + pad_w; }
  int padded_h() const noexcept { return original_h + pad_h; }
  int patch_count() const noexcept { return rows * cols; }

  bool valid() const noexcept {
    const int p = patch_size;
    return p >= 1 && original_w >= 1 && original_h >= 1 && pad_w >= 0 && pad_h >= 0 &&
           pad_w < p && pad_h < p && padded_w() % p == 0 && padded_h() % p == 0 &&
           cols == padded_w() / p && rows == padded_h() / p && rows >= 1 && cols >= 1;
  }

  friend bool operator==(const PatchGrid&, const PatchGrid&) = default;
};

enum class Polymer { HDPE, PET, OTHER };

constexpr std::string_view to_string(Polymer p) {
  switch (p) {
    case Polymer::HDPE: return "HDPE";
    case Polymer::PET: return "PET";
    case Polymer::OTHER: return "OTHER";
  }
  return "OTHER";
}

inline Polymer polymer_from_string(std::string_view s) {
  if (s == "HDPE") return Polymer::HDPE;
  if (s == "PET") return Polymer::PET;
  if (s == "OTHER") return Polymer::OTHER;
  fail(Errc::ParseError, "unknown polymer '" + std::string(s) + "'");
}

// Nominal spiked-particle sizes: HDPE 500 um, PET 120 um.
constexpr double nominal_diameter_um(Polymer p) {
  switch (p) {
    case Polymer::HDPE: return 500.0;
    case Polymer::PET: return 120.0;
    case Polymer::OTHER: return 250.0;
  }
  return 250.0;
}

struct ParticleSpec {
  Polymer polymer = Polymer::HDPE;
  double diameter_um = 500.0;  // major axis
  double center_x = 0.0;
  double center_y = 0.0;
  double eccentricity = 0.0;
  double rotation = 0.0;
  double peak_intensity = 1.0;

  double extent_px(double scale_um_per_px) const noexcept { return diameter_um / scale_um_per_px; }

  void validate() const {
    require(diameter_um > 0.0, Errc::ValueOutOfRange, "particle diameter must be positive");
    require(eccentricity >= 0.0 && eccentricity < 1.0, Errc::ValueOutOfRange,
            "eccentricity must lie in [0,1)");
    require(peak_intensity > 0.0 && peak_intensity <= 1.0, Errc::ValueOutOfRange,
            "peak intensity must lie in (0,1]");
  }

  friend bool operator==(const ParticleSpec&, const ParticleSpec&) = default;
};

struct PixelCoord {
  int x = 0;
  int y = 0;
  friend auto operator<=>(const PixelCoord&, const PixelCoord&) = default;
};

struct BoundingBox {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // inclusive
  int area() const noexcept { return (x1 - x0 + 1) * (y1 - y0 + 1); }
  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

struct Detection {
  int id = 0;
  int pixel_area = 0;
  double centroid_x = 0.0;
  double centroid_y = 0.0;
  BoundingBox bbox;
  double feret_px = 0.0;
  double feret_um = 0.0;
  std::vector<PixelCoord> pixels;
};

struct ConfusionCounts {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;

  std::uint64_t total() const noexcept { return tp + fp + fn + tn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o) noexcept {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

struct MetricsReport {
  ConfusionCounts counts;
  double iou = 0.0;
  double f1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double accuracy = 0.0;
};

// Derives the headline metrics from raw counts. When tp+fp+fn == 0 (both masks
// empty) iou, precision, recall and f1 are all 1.
inline MetricsReport metrics(const ConfusionCounts& c) {
  MetricsReport r;
  r.counts = c;
  const double tp = double(c.tp), fp = double(c.fp), fn = double(c.fn);
  if (c.tp + c.fp + c.fn == 0) {
    r.iou = r.precision = r.recall = r.f1 = 1.0;
  } else {
    r.precision = (c.tp + c.fp) == 0 ? 0.0 : tp / (tp + fp);
    r.recall = (c.tp + c.fn) == 0 ? 0.0 : tp / (tp + fn);
    r.iou = tp / (tp + fp + fn);
    // Harmonic mean of precision and recall, written in count form.
    r.f1 = 2.0 * tp / (2.0 * tp + fp + fn);
  }
  r.accuracy = c.total() == 0 ? 1.0 : double(c.tp + c.tn) / double(c.total());
  return r;
}

inline void validate_pair(const FluorescenceImage& image, const Raster<std::uint8_t>& mask) {
  require(image.width() == mask.width() && image.height() == mask.height(),
          Errc::DimensionMismatch,
          "image " + std::to_string(image.width()) + "x" + std::to_string(image.height()) +
              " vs mask " + std::to_string(mask.width()) + "x" + std::to_string(mask.height()));
  BinaryMask{mask};
}

// Typed values already hold their own invariants; only the pairing is checked.
inline void validate_pair(const FluorescenceImage& image, const BinaryMask& mask) {
  validate_pair(image, mask.labels());
}

}  // namespace mdn

#pragma once

// Report emitters: machine-readable JSON, a plain-text metrics table, a
// bar-chart raster of the five headline metrics, and mask overlays.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mdn/core.hpp"
#include "mdn/eval.hpp"

namespace mdn {

inline nlohmann::json to_json(const MetricsReport& r) {
  return {{"tp", r.counts.tp},         {"fp", r.counts.fp},       {"fn", r.counts.fn},
          {"tn", r.counts.tn},         {"iou", r.iou},            {"f1", r.f1},
          {"precision", r.precision},  {"recall", r.recall},      {"accuracy", r.accuracy}};
}

inline nlohmann::json to_json(const EvaluationResult& e) {
  nlohmann::json j;
  j["split"] = std::string(to_string(e.split));
  j["averaging"] = "micro";
  const auto micro = to_json(e.micro);
  for (const char* k : {"iou", "f1", "precision", "recall", "accuracy"}) j[k] = micro[k];
  j["micro"] = micro;
  j["macro"] = to_json(e.macro);
  auto rows = nlohmann::json::array();
  for (const auto& im : e.per_image) {
    auto row = to_json(im.report);
    row["image_path"] = im.image_path;
    rows.push_back(std::move(row));
  }
  j["per_image"] = rows;
  return j;
}

namespace detail {
inline std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%6.2f%%", 100.0 * v);
  return buf;
}
}  // namespace detail

// Human-readable table: headline metrics (micro and macro) then one row per image.
inline std::string metrics_table(const EvaluationResult& e) {
  std::ostringstream out;
  out << "Performance metrics (" << to_string(e.split) << " split, " << e.per_image.size()
      << " images)\n\n";
  out << "Metric        Micro     Macro\n";
  out << "------------  --------  --------\n";
  const std::array<std::pair<const char*, double MetricsReport::*>, 5> rows{{
      {"IoU", &MetricsReport::iou},
      {"F1-Score", &MetricsReport::f1},
      {"Precision", &MetricsReport::precision},
      {"Recall", &MetricsReport::recall},
      {"Accuracy", &MetricsReport::accuracy},
  }};
  for (const auto& [name, field] : rows) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%-12s  %s  %s\n", name, detail::pct(e.micro.*field).c_str(),
                  detail::pct(e.macro.*field).c_str());
    out << buf;
  }
  const auto& c = e.micro.counts;
  out << "\nPixel counts: tp=" << c.tp << " fp=" << c.fp << " fn=" << c.fn << " tn=" << c.tn
      << "\n\nPer image\n";
  out << "image                                  IoU       F1        Precision Recall    Accuracy\n";
  for (const auto& im : e.per_image) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-36s  %s  %s  %s  %s  %s\n", im.image_path.c_str(),
                  detail::pct(im.report.iou).c_str(), detail::pct(im.report.f1).c_str(),
                  detail::pct(im.report.precision).c_str(), detail::pct(im.report.recall).c_str(),
                  detail::pct(im.report.accuracy).c_str());
    out << buf;
  }
  return out.str();
}

// Bars in table order: IoU, F1, Precision, Recall, Accuracy. Gridlines every 0.2.
inline Raster<std::uint8_t> metrics_bar_chart(const MetricsReport& r, int width = 500,
                                              int height = 300) {
  Raster<std::uint8_t> img(width, height, 3, 255);
  auto fill = [&](int x0, int y0, int x1, int y1, std::array<std::uint8_t, 3> rgb) {
    for (int y = std::max(0, y0); y < std::min(height, y1); ++y)
      for (int x = std::max(0, x0); x < std::min(width, x1); ++x)
        for (int c = 0; c < 3; ++c) img(x, y, c) = rgb[std::size_t(c)];
  };
  const int left = 40, right = width - 20, top = 20, bottom = height - 30;
  const int plot_h = bottom - top;
  for (int k = 0; k <= 5; ++k) {
    const int y = bottom - plot_h * k / 5;
    fill(left, y, right, y + 1, {210, 210, 210});
  }
  fill(left - 1, top, left + 1, bottom + 1, {0, 0, 0});
  fill(left - 1, bottom, right, bottom + 2, {0, 0, 0});
  const std::array<double, 5> values{r.iou, r.f1, r.precision, r.recall, r.accuracy};
  const std::array<std::array<std::uint8_t, 3>, 5> colors{
      {{31, 119, 180}, {255, 127, 14}, {44, 160, 44}, {214, 39, 40}, {148, 103, 189}}};
  const int slot = (right - left) / 5;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const int bar_h = int(std::lround(std::clamp(values[i], 0.0, 1.0) * plot_h));
    const int x0 = left + int(i) * slot + slot / 5;
    fill(x0, bottom - bar_h, x0 + slot * 3 / 5, bottom, colors[i]);
  }
  return img;
}

inline constexpr std::array<std::uint8_t, 3> kOverlayColor{0, 255, 255};
inline constexpr double kOverlayAlpha = 0.5;

// Tints mask-1 pixels: out = round((1 - alpha) * pixel + alpha * color).
inline Raster<std::uint8_t> overlay(const Raster<std::uint8_t>& rgb, const BinaryMask& mask,
                                    std::array<std::uint8_t, 3> color = kOverlayColor,
                                    double alpha = kOverlayAlpha) {
  require(rgb.channels() == 3, Errc::DimensionMismatch, "overlay needs an RGB image");
  require(rgb.width() == mask.width() && rgb.height() == mask.height(), Errc::DimensionMismatch,
          "image and mask dimensions differ");
  Raster<std::uint8_t> out = rgb;
  for (int y = 0; y < rgb.height(); ++y)
    for (int x = 0; x < rgb.width(); ++x) {
      if (!mask(x, y)) continue;
      for (int c = 0; c < 3; ++c)
        out(x, y, c) = static_cast<std::uint8_t>(
            std::lround((1.0 - alpha) * rgb(x, y, c) + alpha * color[std::size_t(c)]));
    }
  return out;
}

inline nlohmann::json to_json(const Detection& d) {
  return {{"id", d.id},
          {"pixel_area", d.pixel_area},
          {"centroid", {d.centroid_x, d.centroid_y}},
          {"bbox", {d.bbox.x0, d.bbox.y0, d.bbox.x1, d.bbox.y1}},
          {"feret_px", d.feret_px},
          {"feret_um", d.feret_um}};
}

inline nlohmann::json to_json(const SizeReport& r) {
  auto bins = nlohmann::json::array();
  for (std::size_t i = 0; i < r.counts.size(); ++i)
    bins.push_back({{"label", r.labels[i]},
                    {"lower_um", i == 0 ? nlohmann::json(0.0) : nlohmann::json(r.edges_um[i - 1])},
                    {"upper_um", i < r.edges_um.size() ? nlohmann::json(r.edges_um[i])
                                                       : nlohmann::json(nullptr)},
                    {"count", r.counts[i]}});
  return {{"bins", bins}, {"total", r.total}};
}

}  // namespace mdn

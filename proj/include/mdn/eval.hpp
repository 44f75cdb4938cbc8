#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "mdn/core.hpp"
#include "mdn/inference.hpp"
#include "mdn/manifest.hpp"
#include "mdn/parallel.hpp"
#include "mdn/pnm.hpp"

namespace mdn {

inline ConfusionCounts confusion_counts(const BinaryMask& pred, const BinaryMask& gt) {
  require(pred.width() == gt.width() && pred.height() == gt.height(), Errc::DimensionMismatch,
          "prediction and ground truth dimensions differ");
  ConfusionCounts c;
  const auto& p = pred.labels().storage();
  const auto& g = gt.labels().storage();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const unsigned k = unsigned(p[i]) << 1 | g[i];
    switch (k) {
      case 3: ++c.tp; break;
      case 2: ++c.fp; break;
      case 1: ++c.fn; break;
      default: ++c.tn; break;
    }
  }
  return c;
}

// --- split evaluation --------------------------------------------------------

struct ImageReport {
  std::string image_path;
  MetricsReport report;
};

struct EvaluationResult {
  Split split = Split::Test;
  MetricsReport micro;  // counts summed over images, metrics derived once
  MetricsReport macro;  // per-image metrics averaged (counts are the sums)
  std::vector<ImageReport> per_image;
};

inline EvaluationResult aggregate(std::vector<ImageReport> per_image, Split split) {
  require(!per_image.empty(), Errc::EmptySplit, "nothing to aggregate");
  EvaluationResult r;
  r.split = split;
  ConfusionCounts total;
  MetricsReport mean;
  for (const auto& im : per_image) {
    total += im.report.counts;
    mean.iou += im.report.iou;
    mean.f1 += im.report.f1;
    mean.precision += im.report.precision;
    mean.recall += im.report.recall;
    mean.accuracy += im.report.accuracy;
  }
  const double n = double(per_image.size());
  r.micro = metrics(total);
  r.macro = {total, mean.iou / n, mean.f1 / n, mean.precision / n, mean.recall / n,
             mean.accuracy / n};
  r.per_image = std::move(per_image);
  return r;
}

using MaskPredictor = std::function<BinaryMask(const FluorescenceImage&)>;

// Runs `predict` on every image of the split (in manifest order) and scores it
// against the stored ground-truth mask.
inline EvaluationResult evaluate(const DatasetManifest& manifest, Split split,
                                 const MaskPredictor& predict) {
  const auto entries = manifest.select(split);
  require(!entries.empty(), Errc::EmptySplit,
          "split '" + std::string(to_string(split)) + "' has no entries");
  std::vector<ImageReport> per_image;
  per_image.reserve(entries.size());
  for (const auto* e : entries) {
    const auto image = pnm::read_image(manifest.resolve(e->image_path), manifest.scale_um_per_px);
    const auto gt = pnm::read_mask(manifest.resolve(e->mask_path));
    validate_pair(image, gt);
    per_image.push_back({e->image_path, metrics(confusion_counts(predict(image), gt))});
  }
  return aggregate(std::move(per_image), split);
}

template <typename T>
EvaluationResult evaluate(const SegNet<T>& model, const DatasetManifest& manifest, Split split,
                          double threshold = 0.5, const PipelineConfig& cfg = {}) {
  auto ws = model.make_workspace();
  return evaluate(manifest, split, [&](const FluorescenceImage& image) {
    return predict_mask(model, image, threshold, cfg, ws);
  });
}

// --- particle analysis -------------------------------------------------------

namespace detail {

struct UnionFind {
  std::vector<int> parent;
  int make() {
    parent.push_back(int(parent.size()));
    return parent.back();
  }
  int find(int x) {
    while (parent[std::size_t(x)] != x) {
      parent[std::size_t(x)] = parent[std::size_t(parent[std::size_t(x)])];
      x = parent[std::size_t(x)];
    }
    return x;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::size_t(std::max(a, b))] = std::min(a, b);
  }
};

inline double cross(const PixelCoord& o, const PixelCoord& a, const PixelCoord& b) {
  return double(a.x - o.x) * (b.y - o.y) - double(a.y - o.y) * (b.x - o.x);
}

}  // namespace detail

// Andrew's monotone chain over pixel centres; collinear points are dropped.
inline std::vector<PixelCoord> convex_hull(std::vector<PixelCoord> pts) {
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return pts;
  std::vector<PixelCoord> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && detail::cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, lower = k + 1; i-- > 0;) {
    while (k >= lower && detail::cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

// Maximum distance between pixel centres of a component, taken over its hull.
inline double feret_diameter(const std::vector<PixelCoord>& pixels) {
  require(!pixels.empty(), Errc::InvalidArgument, "feret diameter of an empty component");
  const auto hull = convex_hull(pixels);
  std::int64_t best = 0;
  for (std::size_t i = 0; i < hull.size(); ++i)
    for (std::size_t j = i + 1; j < hull.size(); ++j) {
      const std::int64_t dx = hull[i].x - hull[j].x, dy = hull[i].y - hull[j].y;
      best = std::max(best, dx * dx + dy * dy);
    }
  return std::sqrt(double(best));
}

// Two-pass labeling with union-find. Detections are ordered by first pixel in
// raster order and numbered from 1.
inline std::vector<Detection> connected_components(const BinaryMask& mask, int connectivity = 8,
                                                   double scale_um_per_px = 1.0) {
  require(connectivity == 4 || connectivity == 8, Errc::InvalidArgument,
          "connectivity must be 4 or 8");
  const int w = mask.width(), h = mask.height();
  std::vector<int> label(std::size_t(w) * h, -1);
  detail::UnionFind uf;
  auto at = [&](int x, int y) -> int& { return label[std::size_t(y) * w + x]; };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!mask(x, y)) continue;
      int l = -1;
      auto visit = [&](int nx, int ny) {
        if (nx < 0 || ny < 0 || nx >= w) return;
        const int n = at(nx, ny);
        if (n < 0) return;
        if (l < 0) l = n;
        else uf.unite(l, n);
      };
      visit(x - 1, y);
      visit(x, y - 1);
      if (connectivity == 8) {
        visit(x - 1, y - 1);
        visit(x + 1, y - 1);
      }
      at(x, y) = l >= 0 ? l : uf.make();
    }

  std::vector<int> root_to_index(uf.parent.size(), -1);
  std::vector<Detection> out;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int l = at(x, y);
      if (l < 0) continue;
      const int root = uf.find(l);
      int& idx = root_to_index[std::size_t(root)];
      if (idx < 0) {
        idx = int(out.size());
        Detection d;
        d.id = idx + 1;
        d.bbox = {x, y, x, y};
        out.push_back(std::move(d));
      }
      auto& d = out[std::size_t(idx)];
      d.pixels.push_back({x, y});
      d.bbox.x0 = std::min(d.bbox.x0, x);
      d.bbox.x1 = std::max(d.bbox.x1, x);
      d.bbox.y1 = std::max(d.bbox.y1, y);
    }
  for (auto& d : out) {
    d.pixel_area = int(d.pixels.size());
    double sx = 0.0, sy = 0.0;
    for (const auto& p : d.pixels) {
      sx += p.x;
      sy += p.y;
    }
    d.centroid_x = sx / d.pixel_area;
    d.centroid_y = sy / d.pixel_area;
    d.feret_px = feret_diameter(d.pixels);
    d.feret_um = d.feret_px * scale_um_per_px;
  }
  return out;
}

struct SizeReport {
  std::vector<double> edges_um;          // strictly increasing thresholds
  std::vector<std::size_t> counts;       // edges.size() + 1 bins
  std::vector<std::string> labels;       // e.g. "<100 um", "100-250 um", ">=250 um"
  std::size_t total = 0;
};

inline std::string bin_label(const std::vector<double>& edges, std::size_t i) {
  auto fmt = [](double v) {
    std::string s = std::to_string(v);
    s.erase(s.find_last_not_of('0') + 1);
    if (!s.empty() && s.back() == '.') s.pop_back();
    return s;
  };
  if (edges.empty()) return "all";
  if (i == 0) return "<" + fmt(edges.front()) + " um";
  if (i == edges.size()) return ">=" + fmt(edges.back()) + " um";
  return fmt(edges[i - 1]) + "-" + fmt(edges[i]) + " um";
}

// Histogram of feret diameters in micrometres: bin i holds [edge[i-1], edge[i]).
inline SizeReport size_report(const std::vector<Detection>& detections, double scale_um_per_px,
                              const std::vector<double>& edges_um) {
  for (std::size_t i = 1; i < edges_um.size(); ++i)
    require(edges_um[i] > edges_um[i - 1], Errc::InvalidBins, "bins must be strictly increasing");
  for (double e : edges_um) require(std::isfinite(e), Errc::InvalidBins, "bins must be finite");
  require(scale_um_per_px > 0.0, Errc::InvalidArgument, "scale must be positive");
  SizeReport r;
  r.edges_um = edges_um;
  r.counts.assign(edges_um.size() + 1, 0);
  for (std::size_t i = 0; i <= edges_um.size(); ++i) r.labels.push_back(bin_label(edges_um, i));
  for (const auto& d : detections) {
    const double um = d.feret_px * scale_um_per_px;
    const auto bin = std::size_t(std::upper_bound(edges_um.begin(), edges_um.end(), um) -
                                 edges_um.begin());
    ++r.counts[bin];
  }
  r.total = detections.size();
  return r;
}

}  // namespace mdn

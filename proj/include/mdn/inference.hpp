#pragma once

// Image -> mask inference: normalize, then either pad + tile at the patch
// size (native resolution) or resize to the model input, run the network per
// patch, stitch probabilities back and threshold.

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mdn/core.hpp"
#include "mdn/preprocess.hpp"
#include "mdn/segnet.hpp"

namespace mdn {

enum class PipelineMode { Tile, Resize };

constexpr std::string_view to_string(PipelineMode m) {
  return m == PipelineMode::Tile ? "tile" : "resize";
}

inline PipelineMode pipeline_mode_from_string(std::string_view s) {
  if (s == "tile") return PipelineMode::Tile;
  if (s == "resize") return PipelineMode::Resize;
  fail(Errc::ParseError, "unknown pipeline_mode '" + std::string(s) + "'");
}

struct PipelineConfig {
  PipelineMode mode = PipelineMode::Tile;
  int patch_size = 0;  // 0: use the model input size
  NormalizationMode normalization_mode = NormalizationMode::Global;

  friend bool operator==(const PipelineConfig&, const PipelineConfig&) = default;
};

inline nlohmann::json to_json(const PipelineConfig& c) {
  return {{"pipeline_mode", std::string(to_string(c.mode))},
          {"patch_size", c.patch_size},
          {"normalization_mode", std::string(to_string(c.normalization_mode))}};
}

inline PipelineConfig pipeline_config_from_json(const nlohmann::json& j, PipelineConfig c = {}) {
  try {
    if (j.contains("pipeline_mode"))
      c.mode = pipeline_mode_from_string(j["pipeline_mode"].get<std::string>());
    if (j.contains("patch_size")) c.patch_size = j["patch_size"].get<int>();
    if (j.contains("normalization_mode"))
      c.normalization_mode =
          normalization_mode_from_string(j["normalization_mode"].get<std::string>());
  } catch (const nlohmann::json::exception& ex) {
    fail(Errc::ParseError, std::string("pipeline config: ") + ex.what());
  }
  return c;
}

inline int effective_patch_size(const PipelineConfig& p, const SegModelConfig& m) {
  const int size = p.patch_size > 0 ? p.patch_size : m.input_size;
  require(size % (1 << m.depth) == 0, Errc::InvalidConfig,
          "patch size " + std::to_string(size) + " is not divisible by 2^depth");
  return size;
}

template <typename T>
nn::Tensor<T> to_tensor(const Raster<float>& hwc) {
  nn::Tensor<T> t(hwc.channels(), hwc.height(), hwc.width());
  const std::size_t plane = t.plane();
  for (std::size_t i = 0; i < plane; ++i)
    for (int c = 0; c < hwc.channels(); ++c)
      t.data[std::size_t(c) * plane + i] = T(hwc.storage()[i * std::size_t(hwc.channels()) + c]);
  return t;
}

inline FluorescenceImage ensure_normalized(const FluorescenceImage& image,
                                           NormalizationMode mode) {
  return image.normalized() ? image : normalize(image, mode);
}

// A training or inference unit: one model-sized patch and, for training, its labels.
struct PatchSample {
  Raster<float> pixels;          // normalized, HWC
  Raster<std::uint8_t> labels;   // {0,1}, single channel; empty for inference
};

// Cuts an image (and optional mask) into model-sized patches per the pipeline mode.
inline std::vector<PatchSample> make_patches(const FluorescenceImage& image,
                                             const BinaryMask* mask, const PipelineConfig& cfg,
                                             const SegModelConfig& model) {
  const auto norm = ensure_normalized(image, cfg.normalization_mode);
  std::vector<PatchSample> out;
  if (cfg.mode == PipelineMode::Resize) {
    PatchSample s;
    s.pixels = resize(norm, model.input_size).pixels();
    if (mask) s.labels = resize_mask(*mask, model.input_size).labels();
    out.push_back(std::move(s));
    return out;
  }
  const int p = effective_patch_size(cfg, model);
  auto padded = pad(norm.pixels(), p);
  auto tiles = tile(padded.raster, padded.grid);
  std::vector<Raster<std::uint8_t>> mask_tiles;
  if (mask) {
    auto pm = pad(mask->labels(), p);
    mask_tiles = tile(pm.raster, pm.grid);
  }
  for (std::size_t i = 0; i < tiles.size(); ++i)
    out.push_back({std::move(tiles[i]), mask ? std::move(mask_tiles[i]) : Raster<std::uint8_t>{}});
  return out;
}

// Per-pixel foreground probability at the image's original dimensions.
template <typename T>
Raster<float> predict_probabilities(const SegNet<T>& model, const FluorescenceImage& image,
                                    const PipelineConfig& cfg, nn::Workspace<T>& ws) {
  const auto norm = ensure_normalized(image, cfg.normalization_mode);
  auto run = [&](const Raster<float>& patch) {
    const auto probs = model.probabilities(to_tensor<T>(patch), ws);
    std::vector<float> v(probs.data.begin(), probs.data.end());
    return Raster<float>(probs.w, probs.h, 1, std::move(v));
  };
  if (cfg.mode == PipelineMode::Resize) {
    const auto small = run(resize(norm, model.config().input_size).pixels());
    auto back = resize_bilinear(small, image.width(), image.height());
    for (auto& v : back.storage()) v = std::clamp(v, 0.0f, 1.0f);
    return back;
  }
  const int p = effective_patch_size(cfg, model.config());
  auto padded = pad(norm.pixels(), p);
  auto tiles = tile(padded.raster, padded.grid);
  std::vector<Raster<float>> outputs;
  outputs.reserve(tiles.size());
  for (const auto& t : tiles) outputs.push_back(run(t));
  return stitch(outputs, padded.grid);
}

// Pixels with probability strictly above the threshold become 1.
inline BinaryMask threshold_mask(const Raster<float>& prob, double threshold) {
  Raster<std::uint8_t> labels(prob.width(), prob.height(), 1);
  for (std::size_t i = 0; i < prob.size(); ++i)
    labels.storage()[i] = double(prob.storage()[i]) > threshold ? 1 : 0;
  return BinaryMask(std::move(labels));
}

template <typename T>
BinaryMask predict_mask(const SegNet<T>& model, const FluorescenceImage& image, double threshold,
                        const PipelineConfig& cfg, nn::Workspace<T>& ws) {
  require(threshold > 0.0 && threshold < 1.0, Errc::InvalidArgument,
          "threshold must lie in (0,1)");
  return threshold_mask(predict_probabilities(model, image, cfg, ws), threshold);
}

template <typename T>
BinaryMask predict_mask(const SegNet<T>& model, const FluorescenceImage& image,
                        double threshold = 0.5, const PipelineConfig& cfg = {}) {
  auto ws = model.make_workspace();
  return predict_mask(model, image, threshold, cfg, ws);
}

}  // namespace mdn

#pragma once

// Checkpoint container:
//   8 bytes   magic "MDNCKPT\n"
//   u32 LE    format_version
//   u64 LE    header length in bytes
//   header    JSON: model_config, train_config, pipeline, epoch, history,
//             weights (name, shape, offset, count), scalar = "float32"
//   payload   float32 LE parameter values, blocks in header order

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mdn/error.hpp"
#include "mdn/inference.hpp"
#include "mdn/segnet.hpp"
#include "mdn/train.hpp"

namespace mdn {

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;
inline constexpr char kCheckpointMagic[8] = {'M', 'D', 'N', 'C', 'K', 'P', 'T', '\n'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload is written in native little-endian order");

struct Checkpoint {
  std::vector<float> weights;
  SegModelConfig model_config;
  TrainConfig train_config;
  PipelineConfig pipeline;
  int epoch = 0;
  History history;
  std::uint32_t format_version = kCheckpointFormatVersion;
};

template <typename T>
Checkpoint make_checkpoint(const SegNet<T>& model, const TrainConfig& train_cfg,
                           const PipelineConfig& pipeline, const History& history) {
  Checkpoint c;
  c.weights.assign(model.parameters().begin(), model.parameters().end());
  c.model_config = model.config();
  c.train_config = train_cfg;
  c.pipeline = pipeline;
  c.epoch = int(history.size());
  c.history = history;
  return c;
}

inline nlohmann::json history_to_json(const History& h) {
  auto arr = nlohmann::json::array();
  for (const auto& r : h) {
    nlohmann::json row{{"epoch", r.epoch}, {"train_loss", r.train_loss}};
    row["val_iou"] = std::isnan(r.val_iou) ? nlohmann::json(nullptr) : nlohmann::json(r.val_iou);
    arr.push_back(std::move(row));
  }
  return arr;
}

inline History history_from_json(const nlohmann::json& j) {
  History h;
  for (const auto& row : j) {
    EpochRecord r;
    r.epoch = row.at("epoch").get<int>();
    r.train_loss = row.at("train_loss").get<double>();
    r.val_iou = row.at("val_iou").is_null() ? std::numeric_limits<double>::quiet_NaN()
                                            : row.at("val_iou").get<double>();
    h.push_back(r);
  }
  return h;
}

inline void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  const SegNet<float> layout(c.model_config);
  require(layout.parameter_count() == c.weights.size(), Errc::ShapeMismatch,
          "weights do not match the model configuration");
  nlohmann::json header;
  header["format_version"] = c.format_version;
  header["model_config"] = to_json(c.model_config);
  header["train_config"] = to_json(c.train_config);
  header["pipeline"] = to_json(c.pipeline);
  header["epoch"] = c.epoch;
  header["history"] = history_to_json(c.history);
  header["scalar"] = "float32";
  auto blocks = nlohmann::json::array();
  for (const auto& b : layout.blocks())
    blocks.push_back({{"name", b.name}, {"shape", b.shape}, {"offset", b.offset},
                      {"count", b.count}});
  header["weights"] = blocks;
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(bool(out), Errc::IoFailure, "cannot write checkpoint " + path.string());
  const std::uint32_t version = c.format_version;
  const std::uint64_t len = text.size();
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  out.write(reinterpret_cast<const char*>(&version), sizeof version);
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), std::streamsize(text.size()));
  out.write(reinterpret_cast<const char*>(c.weights.data()),
            std::streamsize(c.weights.size() * sizeof(float)));
  require(bool(out), Errc::IoFailure, "write failed for " + path.string());
}

template <typename T>
void save_checkpoint(const SegNet<T>& model, const TrainConfig& train_cfg,
                     const PipelineConfig& pipeline, const History& history,
                     const std::filesystem::path& path) {
  save_checkpoint(make_checkpoint(model, train_cfg, pipeline, history), path);
}

// Reads and validates a checkpoint. With `expected` set, a differing model
// configuration raises ConfigMismatch.
inline Checkpoint load_checkpoint(const std::filesystem::path& path,
                                  const std::optional<SegModelConfig>& expected = std::nullopt) {
  std::ifstream in(path, std::ios::binary);
  require(bool(in), Errc::IoFailure, "cannot open checkpoint " + path.string());
  char magic[sizeof kCheckpointMagic] = {};
  in.read(magic, sizeof magic);
  require(in.gcount() == sizeof magic && std::memcmp(magic, kCheckpointMagic, sizeof magic) == 0,
          Errc::IoFailure, path.string() + " is not a checkpoint file");
  std::uint32_t version = 0;
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  require(in.gcount() == sizeof version, Errc::IoFailure, "truncated checkpoint header");
  require(version == kCheckpointFormatVersion, Errc::VersionMismatch,
          "checkpoint format_version " + std::to_string(version) + ", expected " +
              std::to_string(kCheckpointFormatVersion));
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  require(in.gcount() == sizeof len && len < (std::uint64_t(1) << 32), Errc::IoFailure,
          "truncated checkpoint header");
  std::string text(len, '\0');
  in.read(text.data(), std::streamsize(len));
  require(std::uint64_t(in.gcount()) == len, Errc::IoFailure, "truncated checkpoint header");

  Checkpoint c;
  c.format_version = version;
  try {
    const auto header = nlohmann::json::parse(text);
    require(header.at("format_version").get<std::uint32_t>() == version, Errc::VersionMismatch,
            "header format_version disagrees with the container");
    require(header.at("scalar").get<std::string>() == "float32", Errc::IoFailure,
            "unsupported scalar type");
    c.model_config = model_config_from_json(header.at("model_config"));
    c.train_config = train_config_from_json(header.at("train_config"));
    c.pipeline = pipeline_config_from_json(header.at("pipeline"));
    c.epoch = header.at("epoch").get<int>();
    c.history = history_from_json(header.at("history"));
    validate(c.model_config);
    if (expected)
      require(*expected == c.model_config, Errc::ConfigMismatch,
              "checkpoint model configuration differs from the expected one");
    const SegNet<float> layout(c.model_config);
    const auto& blocks = header.at("weights");
    require(blocks.size() == layout.blocks().size(), Errc::ConfigMismatch,
            "parameter block count differs from the configured model");
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const auto& b = layout.blocks()[i];
      require(blocks[i].at("name").get<std::string>() == b.name &&
                  blocks[i].at("shape").get<std::vector<int>>() == b.shape &&
                  blocks[i].at("offset").get<std::size_t>() == b.offset,
              Errc::ConfigMismatch, "parameter block " + b.name + " does not match");
    }
    c.weights.resize(layout.parameter_count());
  } catch (const nlohmann::json::exception& ex) {
    fail(Errc::IoFailure, std::string("corrupt checkpoint header: ") + ex.what());
  }
  const auto bytes = std::streamsize(c.weights.size() * sizeof(float));
  in.read(reinterpret_cast<char*>(c.weights.data()), bytes);
  require(in.gcount() == bytes, Errc::IoFailure, "truncated checkpoint payload");
  in.peek();
  require(in.eof(), Errc::IoFailure, "trailing bytes after checkpoint payload");
  return c;
}

template <typename T>
SegNet<T> model_from_checkpoint(const Checkpoint& c) {
  SegNet<T> model(c.model_config);
  require(model.parameter_count() == c.weights.size(), Errc::ConfigMismatch,
          "weight count differs from the configured model");
  std::transform(c.weights.begin(), c.weights.end(), model.parameters().begin(),
                 [](float v) { return T(v); });
  return model;
}

}  // namespace mdn

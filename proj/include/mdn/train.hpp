#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mdn/eval.hpp"
#include "mdn/inference.hpp"
#include "mdn/loss.hpp"
#include "mdn/manifest.hpp"
#include "mdn/parallel.hpp"
#include "mdn/pnm.hpp"
#include "mdn/segnet.hpp"

namespace mdn {

struct TrainConfig {
  int epochs = 20;
  int batch_size = 35;
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::uint64_t seed = 42;
  LossKind loss = LossKind::BCE_PLUS_DICE;
  double threshold = 0.5;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

inline void validate(const TrainConfig& c) {
  require(c.epochs >= 0, Errc::InvalidConfig, "epochs must be >= 0");
  require(c.batch_size >= 1, Errc::InvalidConfig, "batch_size must be >= 1");
  require(c.learning_rate >= 0.0 && std::isfinite(c.learning_rate), Errc::InvalidConfig,
          "learning_rate must be >= 0");
  require(c.momentum >= 0.0 && c.momentum < 1.0, Errc::InvalidConfig,
          "momentum must lie in [0,1)");
  require(c.threshold > 0.0 && c.threshold < 1.0, Errc::InvalidConfig,
          "threshold must lie in (0,1)");
}

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"momentum", c.momentum},
          {"seed", c.seed},
          {"loss", std::string(to_string(c.loss))},
          {"threshold", c.threshold}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c = {}) {
  try {
    if (j.contains("epochs")) c.epochs = j["epochs"].get<int>();
    if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<int>();
    if (j.contains("learning_rate")) c.learning_rate = j["learning_rate"].get<double>();
    if (j.contains("momentum")) c.momentum = j["momentum"].get<double>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("loss")) c.loss = loss_kind_from_string(j["loss"].get<std::string>());
    if (j.contains("threshold")) c.threshold = j["threshold"].get<double>();
  } catch (const nlohmann::json::exception& ex) {
    fail(Errc::ParseError, std::string("train config: ") + ex.what());
  }
  return c;
}

struct EpochRecord {
  int epoch = 0;           // 1-based
  double train_loss = 0.0;
  double val_iou = std::numeric_limits<double>::quiet_NaN();  // NaN without a test split

  friend bool operator==(const EpochRecord& a, const EpochRecord& b) {
    auto same = [](double x, double y) { return x == y || (std::isnan(x) && std::isnan(y)); };
    return a.epoch == b.epoch && same(a.train_loss, b.train_loss) && same(a.val_iou, b.val_iou);
  }
};

using History = std::vector<EpochRecord>;

struct LabeledImage {
  FluorescenceImage image;
  BinaryMask mask;
};

inline std::vector<LabeledImage> load_split(const DatasetManifest& m, Split split) {
  std::vector<LabeledImage> out;
  for (const auto* e : m.select(split)) {
    LabeledImage li{pnm::read_image(m.resolve(e->image_path), m.scale_um_per_px),
                    pnm::read_mask(m.resolve(e->mask_path))};
    validate_pair(li.image, li.mask);
    out.push_back(std::move(li));
  }
  return out;
}

template <typename T>
struct TrainSample {
  nn::Tensor<T> input;
  std::vector<std::uint8_t> target;
};

// Trainer over in-memory data. The batch gradient is the ordered sum of
// per-sample gradients, so results do not depend on the worker count.
template <typename T>
class Trainer {
 public:
  using EpochCallback = std::function<void(const EpochRecord&)>;

  Trainer(SegNet<T>& model, TrainConfig cfg, PipelineConfig pipeline = {})
      : model_(model), cfg_(cfg), pipeline_(pipeline) {
    validate(cfg_);
  }

  void set_workers(int n) { workers_ = n; }
  void on_epoch(EpochCallback cb) { callback_ = std::move(cb); }

  History fit(const std::vector<LabeledImage>& train, const std::vector<LabeledImage>& val) {
    require(!train.empty(), Errc::EmptySplit, "training split is empty");
    std::vector<TrainSample<T>> samples;
    for (const auto& li : train)
      for (auto& p : make_patches(li.image, &li.mask, pipeline_, model_.config()))
        samples.push_back({to_tensor<T>(p.pixels), std::move(p.labels.storage())});
    require(std::size_t(cfg_.batch_size) <= samples.size(), Errc::InvalidConfig,
            "batch_size " + std::to_string(cfg_.batch_size) + " exceeds the " +
                std::to_string(samples.size()) + " training samples");

    const std::size_t n_params = model_.parameter_count();
    const int workers = std::max(1, std::min(worker_count(workers_), cfg_.batch_size));
    std::vector<nn::Workspace<T>> spaces;
    for (int i = 0; i < workers; ++i) spaces.push_back(model_.make_workspace());
    std::vector<nn::Buffer<T>> sample_grads(std::size_t(cfg_.batch_size),
                                            nn::Buffer<T>(n_params));
    std::vector<double> sample_loss(std::size_t(cfg_.batch_size));
    nn::Buffer<T> grad(n_params), velocity(n_params, T(0));

    std::mt19937_64 rng(cfg_.seed);
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    History history;
    for (int epoch = 1; epoch <= cfg_.epochs; ++epoch) {
      std::shuffle(order.begin(), order.end(), rng);
      double loss_sum = 0.0;
      for (std::size_t start = 0; start < order.size(); start += std::size_t(cfg_.batch_size)) {
        const std::size_t count = std::min(std::size_t(cfg_.batch_size), order.size() - start);
        const double scale = 1.0 / double(count);
        parallel_for_workers(int(count), workers, [&](int k, int worker) {
          auto& ws = spaces[std::size_t(worker)];
          const auto& s = samples[order[start + std::size_t(k)]];
          model_.forward(s.input, ws);
          ws.dlogits.reshape(ws.logits.c, ws.logits.h, ws.logits.w);
          sample_loss[std::size_t(k)] =
              logit_loss<T>(ws.logits.data, s.target, cfg_.loss, ws.dlogits.data, scale);
          auto& g = sample_grads[std::size_t(k)];
          std::fill(g.begin(), g.end(), T(0));
          model_.backward(ws, g);
        });
        std::fill(grad.begin(), grad.end(), T(0));
        for (std::size_t k = 0; k < count; ++k) {
          const auto& g = sample_grads[k];
          for (std::size_t i = 0; i < n_params; ++i) grad[i] += g[i];
          loss_sum += sample_loss[k];
        }
        sgd_step<T>(model_.parameters(), grad, velocity, cfg_.learning_rate, cfg_.momentum);
      }
      EpochRecord rec;
      rec.epoch = epoch;
      rec.train_loss = loss_sum / double(samples.size());
      if (!val.empty()) rec.val_iou = micro_iou(val, spaces.front());
      history.push_back(rec);
      if (callback_) callback_(rec);
    }
    return history;
  }

  double micro_iou(const std::vector<LabeledImage>& images, nn::Workspace<T>& ws) const {
    ConfusionCounts total;
    for (const auto& li : images)
      total += confusion_counts(predict_mask(model_, li.image, cfg_.threshold, pipeline_, ws),
                                li.mask);
    return metrics(total).iou;
  }

 private:
  SegNet<T>& model_;
  TrainConfig cfg_;
  PipelineConfig pipeline_;
  int workers_ = 0;
  EpochCallback callback_;
};

// Trains on the manifest's train split, validating on its test split each epoch.
template <typename T>
History train(SegNet<T>& model, const DatasetManifest& manifest, const TrainConfig& cfg,
              const PipelineConfig& pipeline = {},
              std::function<void(const EpochRecord&)> on_epoch = {}) {
  validate(cfg);
  require(manifest.count(Split::Train) > 0, Errc::EmptySplit, "manifest has no train split");
  const auto train_set = load_split(manifest, Split::Train);
  const auto val_set = load_split(manifest, Split::Test);
  Trainer<T> trainer(model, cfg, pipeline);
  if (on_epoch) trainer.on_epoch(std::move(on_epoch));
  return trainer.fit(train_set, val_set);
}

}  // namespace mdn

#pragma once

// Command-line front end: generate, train, predict, evaluate, report, overlay.
// run() returns the process exit status; diagnostics go to the given streams.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mdn/mdn.hpp"

namespace mdn::cli {

namespace fs = std::filesystem;

struct Streams {
  std::ostream& out = std::cout;
  std::ostream& err = std::cerr;
};

inline nlohmann::json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  require(bool(in), Errc::IoFailure, "cannot open config " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& ex) {
    fail(Errc::ParseError, path.string() + ": " + ex.what());
  }
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(bool(out), Errc::IoFailure, "cannot write " + path.string());
  out << text;
  require(bool(out), Errc::IoFailure, "write failed for " + path.string());
}

inline void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec && fs::is_directory(dir), Errc::IoFailure,
          "cannot create output directory " + dir.string() +
              (ec ? ": " + ec.message() : std::string()));
}

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string history_csv(const History& h) {
  std::string s = "epoch,train_loss,val_iou\n";
  for (const auto& r : h)
    s += std::to_string(r.epoch) + "," + format_double(r.train_loss) + "," +
         format_double(r.val_iou) + "\n";
  return s;
}

inline Split parse_split(const std::string& s) {
  const auto split = split_from_string(s);
  require(split != Split::Unassigned, Errc::InvalidArgument, "split must be train or test");
  return split;
}

inline std::vector<double> parse_bins(const std::string& text) {
  std::vector<double> bins;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      bins.push_back(std::stod(item));
    } catch (const std::exception&) {
      fail(Errc::InvalidBins, "bad bin value '" + item + "'");
    }
  }
  return bins;
}

// ---------------------------------------------------------------------------

struct GenerateArgs {
  std::string config, preset = "easy", out;
  std::optional<std::uint64_t> seed;
  std::optional<int> n_images;
  std::optional<double> train_fraction;
};

inline int cmd_generate(const GenerateArgs& a, Streams io) {
  GenConfig cfg = preset(a.preset);
  if (!a.config.empty()) {
    auto j = read_json_file(a.config);
    if (j.contains("preset")) {
      cfg = preset(j["preset"].get<std::string>());
      j.erase("preset");
    }
    cfg = gen_config_from_json(j, cfg);
  }
  if (a.seed) cfg.master_seed = *a.seed;
  if (a.n_images) cfg.n_images = *a.n_images;
  if (a.train_fraction) cfg.train_fraction = *a.train_fraction;
  validate(cfg);

  const fs::path out(a.out);
  make_dir(out);
  auto manifest = generate_dataset(cfg, out);
  manifest = split_dataset(manifest, cfg.train_fraction, cfg.master_seed);
  save_manifest(manifest, out / "manifest.jsonl");
  write_text(out / "effective_config.json", to_json(cfg).dump(2) + "\n");

  std::size_t particles = 0, overlaps = 0;
  for (const auto& e : manifest.entries) {
    particles += e.particles.size();
    overlaps += e.overlap ? 1 : 0;
  }
  io.out << "generated " << manifest.entries.size() << " images (" << to_string(cfg.provenance)
         << ") in " << out.string() << "\n"
         << "  train: " << manifest.count(Split::Train) << "\n"
         << "  test:  " << manifest.count(Split::Test) << "\n"
         << "  particles: " << particles << " (" << overlaps << " images with touching particles)\n"
         << "  manifest: " << (out / "manifest.jsonl").string() << "\n";
  return 0;
}

struct TrainArgs {
  std::string manifest, config, out;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs, batch_size, depth, base_channels, input_size, patch_size;
  std::optional<double> learning_rate, momentum, threshold;
  std::optional<std::string> loss, normalization;
  bool attention = false, no_residual = false, resize_256 = false;
  int workers = 0;
};

inline int cmd_train(const TrainArgs& a, Streams io) {
  SegModelConfig mcfg;
  TrainConfig tcfg;
  PipelineConfig pcfg;
  if (!a.config.empty()) {
    const auto j = read_json_file(a.config);
    static const std::vector<std::string> known = {
        "depth", "base_channels", "input_size", "in_channels", "use_attention",
        "residual_encoder_blocks", "epochs", "batch_size", "learning_rate", "momentum", "seed",
        "loss", "threshold", "pipeline_mode", "patch_size", "normalization_mode", "comment"};
    for (auto it = j.begin(); it != j.end(); ++it)
      require(std::find(known.begin(), known.end(), it.key()) != known.end(), Errc::ParseError,
              "unknown train config field '" + it.key() + "'");
    mcfg = model_config_from_json(j, mcfg);
    tcfg = train_config_from_json(j, tcfg);
    pcfg = pipeline_config_from_json(j, pcfg);
  }
  if (a.seed) tcfg.seed = *a.seed;
  if (a.epochs) tcfg.epochs = *a.epochs;
  if (a.batch_size) tcfg.batch_size = *a.batch_size;
  if (a.learning_rate) tcfg.learning_rate = *a.learning_rate;
  if (a.momentum) tcfg.momentum = *a.momentum;
  if (a.threshold) tcfg.threshold = *a.threshold;
  if (a.loss) tcfg.loss = loss_kind_from_string(*a.loss);
  if (a.depth) mcfg.depth = *a.depth;
  if (a.base_channels) mcfg.base_channels = *a.base_channels;
  if (a.input_size) mcfg.input_size = *a.input_size;
  if (a.attention) mcfg.use_attention = true;
  if (a.no_residual) mcfg.residual_encoder_blocks = false;
  if (a.patch_size) pcfg.patch_size = *a.patch_size;
  if (a.resize_256) {
    pcfg.mode = PipelineMode::Resize;
    mcfg.input_size = 256;
  }
  if (a.normalization) pcfg.normalization_mode = normalization_mode_from_string(*a.normalization);
  validate(mcfg);
  validate(tcfg);
  effective_patch_size(pcfg, mcfg);

  const auto manifest = load_manifest(a.manifest);
  const fs::path out(a.out);
  make_dir(out);
  nlohmann::json effective = to_json(mcfg);
  effective.update(to_json(tcfg));
  effective.update(to_json(pcfg));
  write_text(out / "effective_config.json", effective.dump(2) + "\n");

  SegNet<float> model(mcfg, tcfg.seed);
  io.out << "model: depth=" << mcfg.depth << " base_channels=" << mcfg.base_channels
         << " parameters=" << model.parameter_count() << "\n";
  const auto train_set = load_split(manifest, Split::Train);
  const auto val_set = load_split(manifest, Split::Test);
  require(!train_set.empty(), Errc::EmptySplit, "manifest has no train split");
  Trainer<float> trainer(model, tcfg, pcfg);
  trainer.set_workers(a.workers);
  trainer.on_epoch([&](const EpochRecord& r) {
    io.out << "epoch " << r.epoch << "/" << tcfg.epochs << " train_loss=" << format_double(r.train_loss)
           << " val_iou=" << format_double(r.val_iou) << std::endl;
  });
  const auto history = trainer.fit(train_set, val_set);
  save_checkpoint(model, tcfg, pcfg, history, out / "checkpoint.mdn");
  write_text(out / "history.csv", history_csv(history));
  io.out << "checkpoint: " << (out / "checkpoint.mdn").string() << "\n";
  return 0;
}

struct PredictArgs {
  std::string checkpoint, input, out;
  std::optional<double> threshold;
  std::optional<int> patch_size;
  bool resize_256 = false;
};

inline std::vector<fs::path> list_images(const fs::path& input) {
  std::vector<fs::path> files;
  if (fs::is_directory(input)) {
    for (const auto& e : fs::directory_iterator(input)) {
      const auto ext = e.path().extension().string();
      if (e.is_regular_file() && (ext == ".ppm" || ext == ".pgm" || ext == ".pnm"))
        files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
  } else {
    files.push_back(input);
  }
  return files;
}

inline int cmd_predict(const PredictArgs& a, Streams io) {
  const auto ckpt = load_checkpoint(a.checkpoint);
  const auto model = model_from_checkpoint<float>(ckpt);
  PipelineConfig pcfg = ckpt.pipeline;
  if (a.patch_size) pcfg.patch_size = *a.patch_size;
  if (a.resize_256) pcfg.mode = PipelineMode::Resize;
  const double threshold = a.threshold.value_or(ckpt.train_config.threshold);
  const fs::path out(a.out);
  make_dir(out);
  auto ws = model.make_workspace();
  int failures = 0, written = 0;
  for (const auto& file : list_images(a.input)) {
    try {
      const auto image = pnm::read_image(file);
      const auto mask = predict_mask(model, image, threshold, pcfg, ws);
      const auto dest = out / (file.stem().string() + "_mask.pgm");
      pnm::write_mask(dest, mask);
      ++written;
      io.out << file.string() << " -> " << dest.string() << " (" << mask.count_ones()
             << " foreground px)\n";
    } catch (const std::exception& ex) {
      ++failures;
      io.err << "mdn predict: " << file.string() << ": " << ex.what() << "\n";
    }
  }
  io.out << written << " masks written, " << failures << " failures\n";
  return failures == 0 ? 0 : 1;
}

struct EvaluateArgs {
  std::string checkpoint, manifest, out, split = "test";
  std::optional<double> threshold;
  std::optional<int> patch_size;
  bool resize_256 = false;
};

inline int cmd_evaluate(const EvaluateArgs& a, Streams io) {
  const auto ckpt = load_checkpoint(a.checkpoint);
  const auto model = model_from_checkpoint<float>(ckpt);
  PipelineConfig pcfg = ckpt.pipeline;
  if (a.patch_size) pcfg.patch_size = *a.patch_size;
  if (a.resize_256) pcfg.mode = PipelineMode::Resize;
  const double threshold = a.threshold.value_or(ckpt.train_config.threshold);
  const auto manifest = load_manifest(a.manifest);
  const auto result = evaluate(model, manifest, parse_split(a.split), threshold, pcfg);
  const fs::path out(a.out);
  make_dir(out);
  auto j = to_json(result);
  j["threshold"] = threshold;
  write_text(out / "report.json", j.dump(2) + "\n");
  const auto table = metrics_table(result);
  write_text(out / "report.txt", table);
  pnm::write(out / "metrics_chart.ppm", metrics_bar_chart(result.micro));
  io.out << table.substr(0, table.find("\nPixel counts")) << "\n";
  return 0;
}

struct ReportArgs {
  std::string manifest, masks, out, split = "all", bins = "100,250,1000";
  int connectivity = 8;
};

inline int cmd_report(const ReportArgs& a, Streams io) {
  const auto manifest = load_manifest(a.manifest);
  const auto bins = parse_bins(a.bins);
  std::vector<const ManifestEntry*> entries;
  if (a.split == "all") {
    for (const auto& e : manifest.entries) entries.push_back(&e);
  } else {
    entries = manifest.select(parse_split(a.split));
  }
  const fs::path out(a.out);
  make_dir(out);

  std::vector<Detection> all;
  auto images = nlohmann::json::array();
  std::ostringstream text;
  text << "Particle report (" << entries.size() << " images, scale " << manifest.scale_um_per_px
       << " um/px, connectivity " << a.connectivity << ")\n\n";
  int failures = 0;
  std::size_t expected_total = 0;
  for (const auto* e : entries) {
    const auto stem = fs::path(e->image_path).stem().string();
    const fs::path mask_path = a.masks.empty() ? manifest.resolve(e->mask_path)
                                               : fs::path(a.masks) / (stem + "_mask.pgm");
    BinaryMask mask;
    try {
      mask = pnm::read_mask(mask_path);
    } catch (const std::exception& ex) {
      ++failures;
      io.err << "mdn report: " << mask_path.string() << ": " << ex.what() << "\n";
      continue;
    }
    const auto dets = connected_components(mask, a.connectivity, manifest.scale_um_per_px);
    auto rows = nlohmann::json::array();
    text << e->image_path << ": " << dets.size() << " particles (ground truth "
         << e->particles.size() << (e->overlap ? ", touching" : "") << ")\n";
    for (const auto& d : dets) {
      rows.push_back(to_json(d));
      char buf[160];
      std::snprintf(buf, sizeof buf, "  #%-3d area=%-6d centroid=(%.1f, %.1f) feret=%.1f px / %.1f um\n",
                    d.id, d.pixel_area, d.centroid_x, d.centroid_y, d.feret_px, d.feret_um);
      text << buf;
      all.push_back(d);
    }
    expected_total += e->particles.size();
    images.push_back({{"image_path", e->image_path},
                      {"mask_path", mask_path.string()},
                      {"count", dets.size()},
                      {"ground_truth_count", e->particles.size()},
                      {"overlap", e->overlap},
                      {"detections", rows}});
  }
  const auto hist = size_report(all, manifest.scale_um_per_px, bins);
  text << "\nSize histogram (feret diameter)\n";
  for (std::size_t i = 0; i < hist.counts.size(); ++i) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "  %-18s %zu\n", hist.labels[i].c_str(), hist.counts[i]);
    text << buf;
  }
  text << "  total              " << hist.total << "\n";
  nlohmann::json j{{"scale_um_per_px", manifest.scale_um_per_px},
                   {"connectivity", a.connectivity},
                   {"images", images},
                   {"histogram", to_json(hist)},
                   {"total_detections", all.size()},
                   {"ground_truth_total", expected_total}};
  write_text(out / "particles.json", j.dump(2) + "\n");
  write_text(out / "particles.txt", text.str());
  io.out << "detected " << all.size() << " particles in " << entries.size() - std::size_t(failures)
         << " images (ground truth " << expected_total << ")\n";
  return failures == 0 ? 0 : 1;
}

struct OverlayArgs {
  std::string image, mask, out;
  double alpha = kOverlayAlpha;
};

inline int cmd_overlay(const OverlayArgs& a, Streams io) {
  auto rgb = pnm::read(a.image);
  if (rgb.channels() == 1) {
    Raster<std::uint8_t> expanded(rgb.width(), rgb.height(), 3);
    for (std::size_t i = 0; i < rgb.size(); ++i)
      for (int c = 0; c < 3; ++c) expanded.storage()[3 * i + std::size_t(c)] = rgb.storage()[i];
    rgb = std::move(expanded);
  }
  const auto mask = pnm::read_mask(a.mask);
  require(a.alpha >= 0.0 && a.alpha <= 1.0, Errc::InvalidArgument, "alpha must lie in [0,1]");
  const auto result = overlay(rgb, mask, kOverlayColor, a.alpha);
  const fs::path out(a.out);
  if (out.has_parent_path()) make_dir(out.parent_path());
  pnm::write(out, result);
  io.out << "overlay: " << out.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

inline int run(std::vector<std::string> args, Streams io = {}) {
  CLI::App app{"Microplastic fluorescence segmentation toolkit", "mdn"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Generate a synthetic dataset and its train/test split");
  g->add_option("--config", gen.config, "Generator config file (JSON)");
  g->add_option("--preset", gen.preset, "Built-in preset: easy or hard")->capture_default_str();
  g->add_option("--out", gen.out, "Output directory")->required();
  g->add_option("--seed", gen.seed, "Master seed");
  g->add_option("--n-images", gen.n_images, "Number of images");
  g->add_option("--train-fraction", gen.train_fraction, "Train fraction of the split");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train the segmentation model");
  t->add_option("--manifest", tr.manifest, "Dataset manifest")->required();
  t->add_option("--config", tr.config, "Model/training config file (JSON)");
  t->add_option("--out", tr.out, "Output directory for checkpoint and history")->required();
  t->add_option("--seed", tr.seed, "Training seed");
  t->add_option("--epochs", tr.epochs);
  t->add_option("--batch-size", tr.batch_size);
  t->add_option("--lr", tr.learning_rate, "Learning rate");
  t->add_option("--momentum", tr.momentum);
  t->add_option("--loss", tr.loss, "BCE, DICE or BCE_PLUS_DICE");
  t->add_option("--threshold", tr.threshold, "Binarization threshold");
  t->add_option("--depth", tr.depth);
  t->add_option("--base-channels", tr.base_channels);
  t->add_option("--input-size", tr.input_size);
  t->add_option("--patch-size", tr.patch_size);
  t->add_option("--normalization", tr.normalization, "global or per_channel");
  t->add_flag("--attention", tr.attention, "Gate skip connections with attention");
  t->add_flag("--no-residual", tr.no_residual, "Plain (non-residual) encoder blocks");
  t->add_flag("--resize-256", tr.resize_256, "Resize inputs to 256x256 instead of tiling");
  t->add_option("--workers", tr.workers, "Worker threads (default: MDN_NUM_WORKERS or all cores)");

  PredictArgs pr;
  auto* p = app.add_subcommand("predict", "Predict masks for an image or a directory of images");
  p->add_option("--checkpoint", pr.checkpoint)->required();
  p->add_option("--input", pr.input, "Image file or directory")->required();
  p->add_option("--out", pr.out, "Output directory")->required();
  p->add_option("--threshold", pr.threshold);
  p->add_option("--patch-size", pr.patch_size);
  p->add_flag("--resize-256", pr.resize_256);

  EvaluateArgs ev;
  auto* e = app.add_subcommand("evaluate", "Score a checkpoint on a manifest split");
  e->add_option("--checkpoint", ev.checkpoint)->required();
  e->add_option("--manifest", ev.manifest)->required();
  e->add_option("--out", ev.out, "Output directory for reports")->required();
  e->add_option("--split", ev.split)->capture_default_str();
  e->add_option("--threshold", ev.threshold);
  e->add_option("--patch-size", ev.patch_size);
  e->add_flag("--resize-256", ev.resize_256);

  ReportArgs rp;
  auto* r = app.add_subcommand("report", "Particle counts and size histogram from masks");
  r->add_option("--manifest", rp.manifest)->required();
  r->add_option("--masks", rp.masks, "Directory of {stem}_mask.pgm files (default: ground truth)");
  r->add_option("--out", rp.out, "Output directory")->required();
  r->add_option("--split", rp.split, "train, test or all")->capture_default_str();
  r->add_option("--bins", rp.bins, "Comma-separated feret thresholds in um")->capture_default_str();
  r->add_option("--connectivity", rp.connectivity)->check(CLI::IsMember({4, 8}))->capture_default_str();

  OverlayArgs ov;
  auto* o = app.add_subcommand("overlay", "Tint mask pixels over an image");
  o->add_option("--image", ov.image)->required();
  o->add_option("--mask", ov.mask)->required();
  o->add_option("--out", ov.out, "Output PPM file")->required();
  o->add_option("--alpha", ov.alpha)->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& ex) {
    return app.exit(ex, io.out, io.err);
  }
  try {
    if (*g) return cmd_generate(gen, io);
    if (*t) return cmd_train(tr, io);
    if (*p) return cmd_predict(pr, io);
    if (*e) return cmd_evaluate(ev, io);
    if (*r) return cmd_report(rp, io);
    if (*o) return cmd_overlay(ov, io);
  } catch (const std::exception& ex) {
    io.err << "mdn: error: " << ex.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace mdn::cli

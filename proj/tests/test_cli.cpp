#include <gtest/gtest.h>

#include <fstream>
#include <iterator>
#include <sstream>

#include "mdn_cli.hpp"
#include "oracles.hpp"

using namespace mdn;
namespace fs = std::filesystem;

namespace {

struct Result {
  int status;
  std::string out, err;
};

Result run_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int status = cli::run(std::move(args), {out, err});
  return {status, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

// Small generator config and a model sized for it, shared by the tests below.
class CliFixture : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new oracle::TempDir("cli");
    std::ofstream(dir_->path() / "gen.json")
        << R"({"preset": "easy", "n_images": 10, "image_w": 64, "image_h": 48,
              "polymer_mix": {"PET": 1.0}, "particles_per_image": [1, 2]})";
    std::ofstream(dir_->path() / "train.json")
        << R"({"depth": 2, "base_channels": 4, "input_size": 32, "epochs": 2,
              "batch_size": 4, "seed": 3})";
    const auto r = run_cli({"generate", "--config", (dir_->path() / "gen.json").string(), "--out",
                            (dir_->path() / "data").string()});
    ASSERT_EQ(r.status, 0) << r.err;
    const auto t = run_cli({"train", "--manifest", manifest(), "--config",
                            (dir_->path() / "train.json").string(), "--out",
                            (dir_->path() / "run").string(), "--workers", "1"});
    ASSERT_EQ(t.status, 0) << t.err;
    train_out_ = new std::string(t.out);
  }
  static void TearDownTestSuite() {
    delete dir_;
    delete train_out_;
  }
  static const fs::path& root() { return dir_->path(); }
  static std::string manifest() { return (dir_->path() / "data" / "manifest.jsonl").string(); }
  static std::string checkpoint() { return (dir_->path() / "run" / "checkpoint.mdn").string(); }

  static oracle::TempDir* dir_;
  static std::string* train_out_;
};

oracle::TempDir* CliFixture::dir_ = nullptr;
std::string* CliFixture::train_out_ = nullptr;

}  // namespace

TEST(Cli, PresetGenerateSplitsFiftyImages) {
  oracle::TempDir dir("cli_gen");
  const auto r = run_cli({"generate", "--preset", "easy", "--n-images", "50", "--out",
                          (dir.path() / "d").string()});
  ASSERT_EQ(r.status, 0) << r.err;
  const auto m = load_manifest(dir.path() / "d" / "manifest.jsonl");
  EXPECT_EQ(m.count(Split::Train), 40u);
  EXPECT_EQ(m.count(Split::Test), 10u);
  EXPECT_NE(r.out.find("train: 40"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir.path() / "d" / "effective_config.json"));
}

TEST(Cli, UnwritableOutputDirFails) {
  oracle::TempDir dir("cli_perm");
  std::ofstream(dir.path() / "file") << "x";
  const auto r = run_cli({"generate", "--n-images", "2", "--out",
                          (dir.path() / "file" / "sub").string()});
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.err.find("mdn: error:"), std::string::npos);
}

TEST(Cli, UnknownConfigKeyFails) {
  oracle::TempDir dir("cli_cfg");
  std::ofstream(dir.path() / "bad.json") << R"({"n_imgs": 3})";
  const auto r = run_cli({"generate", "--config", (dir.path() / "bad.json").string(), "--out",
                          (dir.path() / "d").string()});
  EXPECT_EQ(r.status, 1);
  EXPECT_FALSE(r.err.empty());
}

TEST(Cli, UsageErrors) {
  EXPECT_NE(run_cli({}).status, 0);
  EXPECT_NE(run_cli({"train"}).status, 0);
  EXPECT_EQ(run_cli({"--help"}).status, 0);
}

TEST_F(CliFixture, GenerateIsReproducible) {
  const auto again = root() / "data2";
  ASSERT_EQ(run_cli({"generate", "--config", (root() / "gen.json").string(), "--out",
                     again.string()})
                .status,
            0);
  for (const auto& e : fs::recursive_directory_iterator(root() / "data")) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), root() / "data");
    EXPECT_EQ(slurp(e.path()), slurp(again / rel)) << rel;
  }
}

TEST_F(CliFixture, TrainWritesHistoryAndCheckpoint) {
  const auto hist = lines(slurp(root() / "run" / "history.csv"));
  ASSERT_EQ(hist.size(), 3u);
  EXPECT_EQ(hist[0], "epoch,train_loss,val_iou");
  EXPECT_EQ(hist[1].substr(0, 2), "1,");
  EXPECT_NE(train_out_->find("epoch 2/2"), std::string::npos);
  const auto c = load_checkpoint(checkpoint());
  EXPECT_EQ(c.model_config.depth, 2);
  EXPECT_EQ(c.train_config.seed, 3u);
  EXPECT_EQ(c.history.size(), 2u);
}

TEST_F(CliFixture, TrainRerunIsIdentical) {
  const auto out = root() / "run_again";
  ASSERT_EQ(run_cli({"train", "--manifest", manifest(), "--config", (root() / "train.json").string(),
                     "--out", out.string(), "--workers", "2"})
                .status,
            0);
  EXPECT_EQ(slurp(out / "history.csv"), slurp(root() / "run" / "history.csv"));
  EXPECT_EQ(slurp(out / "checkpoint.mdn"), slurp(checkpoint()));
}

TEST_F(CliFixture, ZeroEpochsKeepsInitialization) {
  const auto out = root() / "run0";
  ASSERT_EQ(run_cli({"train", "--manifest", manifest(), "--config", (root() / "train.json").string(),
                     "--out", out.string(), "--epochs", "0"})
                .status,
            0);
  const auto c = load_checkpoint(out / "checkpoint.mdn");
  const SegNet<float> init(c.model_config, 3);
  EXPECT_TRUE(std::equal(c.weights.begin(), c.weights.end(), init.parameters().begin()));
  EXPECT_EQ(lines(slurp(out / "history.csv")).size(), 1u);
}

TEST_F(CliFixture, PredictDirectory) {
  const auto in = root() / "pred_in";
  fs::create_directories(in);
  const auto m = load_manifest(manifest());
  for (int i = 0; i < 5; ++i)
    fs::copy_file(m.resolve(m.entries[std::size_t(i)].image_path),
                  in / ("x" + std::to_string(i) + ".ppm"));
  const auto out = root() / "pred_out";
  const auto r = run_cli({"predict", "--checkpoint", checkpoint(), "--input", in.string(), "--out",
                          out.string()});
  ASSERT_EQ(r.status, 0) << r.err;
  int count = 0;
  for (const auto& e : fs::directory_iterator(out)) {
    ++count;
    const auto raw = pnm::read(e.path());
    for (auto v : raw.values()) ASSERT_TRUE(v == 0 || v == 255);
  }
  EXPECT_EQ(count, 5);
  const auto out2 = root() / "pred_out2";
  ASSERT_EQ(run_cli({"predict", "--checkpoint", checkpoint(), "--input", (in / "x0.ppm").string(),
                     "--out", out2.string()})
                .status,
            0);
  EXPECT_EQ(slurp(out / "x0_mask.pgm"), slurp(out2 / "x0_mask.pgm"));
}

TEST_F(CliFixture, PredictContinuesPastBadFile) {
  const auto in = root() / "pred_bad";
  fs::create_directories(in);
  const auto m = load_manifest(manifest());
  fs::copy_file(m.resolve(m.entries[0].image_path), in / "good.ppm");
  std::ofstream(in / "bad.ppm") << "P6\n1 1\n255\n";
  const auto out = root() / "pred_bad_out";
  const auto r = run_cli({"predict", "--checkpoint", checkpoint(), "--input", in.string(), "--out",
                          out.string()});
  EXPECT_NE(r.status, 0);
  EXPECT_TRUE(fs::exists(out / "good_mask.pgm"));
  EXPECT_NE(r.err.find("bad.ppm"), std::string::npos);
}

TEST_F(CliFixture, EvaluateReportIsSelfConsistent) {
  const auto out = root() / "eval";
  const auto r = run_cli({"evaluate", "--checkpoint", checkpoint(), "--manifest", manifest(),
                          "--split", "test", "--out", out.string()});
  ASSERT_EQ(r.status, 0) << r.err;
  const auto j = nlohmann::json::parse(slurp(out / "report.json"));
  for (const char* k : {"iou", "f1", "precision", "recall", "accuracy"}) ASSERT_TRUE(j.contains(k));
  EXPECT_EQ(j["per_image"].size(), load_manifest(manifest()).count(Split::Test));
  auto check = [](const nlohmann::json& row) {
    ConfusionCounts c{row["tp"], row["fp"], row["fn"], row["tn"]};
    const auto m = metrics(c);
    EXPECT_NEAR(m.iou, row["iou"].get<double>(), 1e-9);
    EXPECT_NEAR(m.f1, row["f1"].get<double>(), 1e-9);
    EXPECT_NEAR(m.precision, row["precision"].get<double>(), 1e-9);
    EXPECT_NEAR(m.recall, row["recall"].get<double>(), 1e-9);
    EXPECT_NEAR(m.accuracy, row["accuracy"].get<double>(), 1e-9);
  };
  check(j["micro"]);
  for (const auto& row : j["per_image"]) check(row);
  EXPECT_TRUE(fs::exists(out / "report.txt"));
  EXPECT_EQ(pnm::read(out / "metrics_chart.ppm").channels(), 3);
}

TEST_F(CliFixture, ReportCountsMatchGroundTruth) {
  const auto out = root() / "report";
  const auto r = run_cli({"report", "--manifest", manifest(), "--out", out.string()});
  ASSERT_EQ(r.status, 0) << r.err;
  const auto j = nlohmann::json::parse(slurp(out / "particles.json"));
  std::size_t total = 0;
  for (const auto& im : j["images"]) {
    if (!im["overlap"].get<bool>()) EXPECT_EQ(im["count"], im["ground_truth_count"]);
    total += im["count"].get<std::size_t>();
  }
  EXPECT_EQ(j["histogram"]["total"].get<std::size_t>(), total);
  EXPECT_EQ(j["total_detections"].get<std::size_t>(), total);
}

TEST_F(CliFixture, ReportOnEmptyMasks) {
  const auto masks = root() / "empty_masks";
  fs::create_directories(masks);
  const auto m = load_manifest(manifest());
  for (const auto& e : m.entries)
    pnm::write_mask(masks / (fs::path(e.image_path).stem().string() + "_mask.pgm"),
                    BinaryMask(64, 48));
  const auto out = root() / "report_empty";
  ASSERT_EQ(run_cli({"report", "--manifest", manifest(), "--masks", masks.string(), "--out",
                     out.string()})
                .status,
            0);
  const auto j = nlohmann::json::parse(slurp(out / "particles.json"));
  EXPECT_EQ(j["total_detections"], 0);
  for (const auto& b : j["histogram"]["bins"]) EXPECT_EQ(b["count"], 0);
}

TEST_F(CliFixture, OverlayWritesTintedImage) {
  const auto m = load_manifest(manifest());
  const auto& e = m.entries[0];
  const auto out = root() / "ov" / "o.ppm";
  const auto r = run_cli({"overlay", "--image", m.resolve(e.image_path).string(), "--mask",
                          m.resolve(e.mask_path).string(), "--out", out.string()});
  ASSERT_EQ(r.status, 0) << r.err;
  const auto img = pnm::read(m.resolve(e.image_path));
  const auto ov = pnm::read(out);
  EXPECT_TRUE(img.same_shape(ov));
  EXPECT_NE(img, ov);
  pnm::write_mask(root() / "small_mask.pgm", BinaryMask(10, 10));
  const auto bad = run_cli({"overlay", "--image", m.resolve(e.image_path).string(), "--mask",
                            (root() / "small_mask.pgm").string(), "--out",
                            (root() / "ov" / "x.ppm").string()});
  EXPECT_NE(bad.status, 0);
}

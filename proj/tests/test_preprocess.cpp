#include <gtest/gtest.h>

#include <random>

#include "mdn/mdn.hpp"
#include "oracles.hpp"

using namespace mdn;

namespace {

FluorescenceImage image_from(int w, int h, const std::vector<float>& v) {
  return FluorescenceImage(Raster<float>(w, h, 3, v), false);
}

}  // namespace

TEST(Normalize, FullRangeDividesBy255) {
  std::vector<float> v(4 * 3);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = float((i * 23) % 256);
  v[0] = 0.0f;
  v[1] = 255.0f;
  const auto out = normalize(image_from(4, 1, v));
  ASSERT_TRUE(out.normalized());
  for (std::size_t i = 0; i < v.size(); ++i)
    EXPECT_FLOAT_EQ(out.pixels().storage()[i], v[i] / 255.0f);
}

TEST(Normalize, ConstantImageMapsToZero) {
  const auto out = normalize(image_from(3, 3, std::vector<float>(27, 37.0f)));
  for (float x : out.pixels().values()) EXPECT_EQ(x, 0.0f);
}

TEST(Normalize, HandEvaluatedMinMax) {
  // values {10, 20, 30} -> {0, 0.5, 1}
  const auto out = normalize(image_from(1, 1, {10.0f, 20.0f, 30.0f}));
  EXPECT_EQ(out.pixels()(0, 0, 0), 0.0f);
  EXPECT_EQ(out.pixels()(0, 0, 1), 0.5f);
  EXPECT_EQ(out.pixels()(0, 0, 2), 1.0f);
}

TEST(Normalize, ZeroOneImageUnchanged) {
  const auto out = normalize(image_from(2, 1, {0, 1, 0, 1, 0, 1}));
  const std::vector<float> want{0, 1, 0, 1, 0, 1};
  for (std::size_t i = 0; i < want.size(); ++i)
    EXPECT_NEAR(out.pixels().storage()[i], want[i], 1e-12);
}

TEST(Normalize, RejectsAlreadyNormalized) {
  const auto n = normalize(image_from(1, 1, {1, 2, 3}));
  try {
    normalize(n);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::AlreadyNormalized);
  }
}

TEST(Normalize, PerChannelScalesEachChannel) {
  const auto out = normalize(image_from(2, 1, {0, 10, 5, 2, 20, 5}), NormalizationMode::PerChannel);
  EXPECT_EQ(out.pixels()(0, 0, 0), 0.0f);
  EXPECT_EQ(out.pixels()(1, 0, 0), 1.0f);
  EXPECT_EQ(out.pixels()(1, 0, 1), 1.0f);
  EXPECT_EQ(out.pixels()(0, 0, 2), 0.0f);
}

TEST(Resize, ShapeContract) {
  const auto out = resize(image_from(512, 512, std::vector<float>(512 * 512 * 3, 9.0f)), 256);
  EXPECT_EQ(out.width(), 256);
  EXPECT_EQ(out.height(), 256);
  for (float x : out.pixels().values()) EXPECT_EQ(x, 9.0f);
}

TEST(Resize, CheckerboardCornersUnderBilinear) {
  Raster<float> src(2, 2, 1);
  src(0, 0) = 0.0f;
  src(1, 0) = 1.0f;
  src(0, 1) = 1.0f;
  src(1, 1) = 0.0f;
  const auto out = resize_bilinear(src, 4, 4);
  EXPECT_EQ(out(0, 0), 0.0f);
  EXPECT_EQ(out(3, 0), 1.0f);
  EXPECT_EQ(out(0, 3), 1.0f);
  EXPECT_EQ(out(3, 3), 0.0f);
  // Output (1, 0) samples x = 1/3: hand-evaluated weights 2/3 * 0 + 1/3 * 1.
  EXPECT_NEAR(out(1, 0), 1.0 / 3.0, 1e-6);
  // Output (1, 1) samples (1/3, 1/3).
  const double fx = 1.0 / 3.0, fy = 1.0 / 3.0;
  const double want = (1 - fx) * fy * 1.0 + fx * (1 - fy) * 1.0;
  EXPECT_NEAR(out(1, 1), want, 1e-6);
}

TEST(ResizeMask, AllOnesAndZeros) {
  EXPECT_EQ(resize_mask(BinaryMask(8, 8, 1), 4).count_ones(), 16u);
  EXPECT_EQ(resize_mask(BinaryMask(8, 8, 0), 4).count_ones(), 0u);
}

TEST(ResizeMask, NearestNeighbourBlock) {
  Raster<std::uint8_t> r(4, 4, 1, 0);
  r(2, 0) = r(3, 0) = r(2, 1) = r(3, 1) = 1;
  const auto out = resize_mask(BinaryMask(r), 2);
  EXPECT_EQ(out.count_ones(), 1u);
  EXPECT_EQ(out(1, 0), 1);
}

TEST(Padding, WorkedExamples) {
  EXPECT_EQ(compute_padding(600, 416, 256), std::make_pair(168, 96));
  EXPECT_EQ(compute_padding(512, 256, 256), std::make_pair(0, 0));
  EXPECT_EQ(compute_padding(1, 1, 256), std::make_pair(255, 255));
}

TEST(Padding, MatchesDirectDefinition) {
  for (int p : {64, 128, 256})
    for (int w = 1; w <= 600; w += 7) {
      const auto [aw, ah] = compute_padding(w, w + 3, p);
      ASSERT_EQ(aw, oracle::pad_amount(w, p));
      ASSERT_EQ(ah, oracle::pad_amount(w + 3, p));
    }
}

TEST(Padding, RejectsBadArguments) {
  EXPECT_THROW(compute_padding(0, 5, 256), Error);
  EXPECT_THROW(compute_padding(5, 5, 0), Error);
}

TEST(Pad, GridForWorkedExample) {
  Raster<float> r(600, 416, 3, 0.5f);
  const auto p = pad(r, 256);
  EXPECT_EQ(p.raster.width(), 768);
  EXPECT_EQ(p.raster.height(), 512);
  EXPECT_EQ(p.grid.rows, 2);
  EXPECT_EQ(p.grid.cols, 3);
  EXPECT_EQ(p.grid.patch_count(), 6);
  EXPECT_EQ(p.raster(767, 511, 2), 0.0f);
  EXPECT_EQ(p.raster(599, 415, 2), 0.5f);
  EXPECT_EQ(tile(p.raster, p.grid).size(), 6u);
}

TEST(Pad, ZeroPaddingIsIdentity) {
  Raster<std::uint8_t> r(256, 256, 1, 1);
  const auto p = pad(r, 256);
  EXPECT_EQ(p.raster, r);
  const auto tiles = tile(p.raster, p.grid);
  ASSERT_EQ(tiles.size(), 1u);
  EXPECT_EQ(tiles[0], r);
}

TEST(Pad, MaskPaddingIsZero) {
  const auto p = pad(BinaryMask(10, 7, 1).labels(), 8);
  std::size_t ones = 0;
  for (auto v : p.raster.values()) ones += v;
  EXPECT_EQ(ones, 70u);
  EXPECT_EQ(p.raster.width(), 16);
  EXPECT_EQ(p.raster.height(), 8);
}

TEST(Tile, RejectsMismatchedGrid) {
  Raster<float> r(100, 100, 1);
  const auto grid = make_grid(90, 90, 32);
  try {
    tile(r, grid);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::GridMismatch);
  }
}

TEST(Stitch, RowMajorPlacement) {
  const auto grid = make_grid(12, 8, 4);  // 3 cols x 2 rows
  std::vector<Raster<int>> patches;
  for (int i = 0; i < 6; ++i) patches.emplace_back(4, 4, 1, i);
  const auto out = stitch(patches, grid);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 12; ++x) ASSERT_EQ(out(x, y), (y / 4) * 3 + x / 4);
}

TEST(Stitch, CropsPadding) {
  const auto grid = make_grid(5, 3, 4);
  std::vector<Raster<int>> patches{Raster<int>(4, 4, 1, 1), Raster<int>(4, 4, 1, 2)};
  const auto out = stitch(patches, grid);
  EXPECT_EQ(out.width(), 5);
  EXPECT_EQ(out.height(), 3);
  EXPECT_EQ(out(4, 2), 2);
}

TEST(Stitch, WrongPatchCount) {
  const auto grid = make_grid(12, 8, 4);
  std::vector<Raster<int>> patches(5, Raster<int>(4, 4, 1));
  try {
    stitch(patches, grid);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::PatchCountMismatch);
  }
}

TEST(Stitch, RandomRoundTrips) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 30; ++trial) {
    const int w = 1 + int(rng() % 200), h = 1 + int(rng() % 200), c = 1 + int(rng() % 3);
    const int p = 1 << (2 + rng() % 5);
    Raster<float> r(w, h, c);
    for (auto& v : r.storage()) v = float(rng() % 1000) / 7.0f;
    const auto padded = pad(r, p);
    ASSERT_EQ(stitch(tile(padded.raster, padded.grid), padded.grid), r);
  }
}

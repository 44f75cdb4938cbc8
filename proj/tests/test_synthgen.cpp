#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>

#include "mdn/mdn.hpp"
#include "oracles.hpp"

using namespace mdn;
namespace fs = std::filesystem;

namespace {

GenConfig small_config(int n = 4) {
  GenConfig c = preset("easy");
  c.n_images = n;
  c.image_w = 96;
  c.image_h = 80;
  c.polymer_mix = {{Polymer::PET, 1.0}};
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(Synthgen, RenderIsDeterministic) {
  const auto c = preset("easy");
  const auto a = render(c, 3), b = render(c, 3);
  EXPECT_EQ(a.image.pixels(), b.image.pixels());
  EXPECT_EQ(a.mask.labels(), b.mask.labels());
  EXPECT_EQ(a.particles, b.particles);
  EXPECT_NE(render(c, 4).image.pixels(), a.image.pixels());
}

TEST(Synthgen, NoParticlesGivesEmptyMask) {
  auto c = small_config();
  c.particles_per_image = {0, 0};
  const auto s = render(c, 0);
  EXPECT_EQ(s.mask.count_ones(), 0u);
  EXPECT_TRUE(s.particles.empty());
}

TEST(Synthgen, HdpeDiskGeometry) {
  auto c = preset("easy");
  c.particles_per_image = {1, 1};
  c.polymer_mix = {{Polymer::HDPE, 1.0}};
  c.diameter_jitter = 0.0;
  c.eccentricity_max = 0.0;
  const auto s = render(c, 0);
  ASSERT_EQ(s.particles.size(), 1u);
  EXPECT_EQ(s.particles[0].diameter_um, 500.0);
  const auto dets = connected_components(s.mask, 8, c.scale_um_per_px);
  ASSERT_EQ(dets.size(), 1u);
  const auto comps = oracle::flood_fill(s.mask, 8);
  ASSERT_EQ(comps.size(), 1u);
  EXPECT_EQ(comps[0].size(), std::size_t(dets[0].pixel_area));
  EXPECT_NEAR(dets[0].feret_px, 100.0, 1.0);
  EXPECT_NEAR(dets[0].feret_um, 500.0, 5.0);
  const double disk = std::numbers::pi * 50.0 * 50.0;
  EXPECT_NEAR(dets[0].pixel_area, disk, 0.05 * disk);
}

TEST(Synthgen, EdgeIsHalfPeakOnBoundary) {
  ParticleSpec p;
  p.diameter_um = 100.0;
  p.center_x = 50.0;
  p.center_y = 40.0;
  p.peak_intensity = 0.8;
  const EllipseGeometry g(p, 5.0);
  EXPECT_NEAR(particle_contribution(p, g, 60.0, 40.0, 1.5), 0.4, 1e-12);
  EXPECT_GT(particle_contribution(p, g, 50.0, 40.0, 1.5), 0.79);
  EXPECT_LT(particle_contribution(p, g, 70.0, 40.0, 1.5), 1e-6);
}

TEST(Synthgen, ParticlesBrighterThanBackground) {
  const auto c = preset("easy");
  for (int i = 0; i < 5; ++i) {
    const auto s = render(c, i);
    double fg = 0, bg = 0;
    std::size_t nf = 0, nb = 0;
    for (int y = 0; y < s.mask.height(); ++y)
      for (int x = 0; x < s.mask.width(); ++x) {
        const double v = s.image.pixels()(x, y, 0);
        if (s.mask(x, y)) fg += v, ++nf;
        else bg += v, ++nb;
      }
    ASSERT_GT(nf, 0u);
    EXPECT_GT(fg / double(nf), bg / double(nb) + 60.0);
  }
}

TEST(Synthgen, TooSmallParticleRejected) {
  auto c = small_config();
  c.scale_um_per_px = 500.0;
  try {
    render(c, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ParticleTooSmall);
  }
}

TEST(Synthgen, ConfigValidation) {
  auto c = preset("easy");
  c.polymer_mix = {{Polymer::HDPE, 0.5}, {Polymer::PET, 0.4}};
  EXPECT_THROW(validate(c), Error);
  c = preset("easy");
  c.background.base_intensity = 0.5;
  EXPECT_THROW(validate(c), Error);
  c = preset("easy");
  c.particles_per_image = {3, 1};
  EXPECT_THROW(validate(c), Error);
  EXPECT_NO_THROW(validate(preset("hard")));
  EXPECT_THROW(preset("medium"), Error);
}

TEST(Synthgen, ConfigJsonRoundTrip) {
  const auto c = preset("hard");
  EXPECT_EQ(gen_config_from_json(to_json(c)), c);
  EXPECT_THROW(gen_config_from_json(nlohmann::json{{"n_imagez", 3}}), Error);
}

TEST(Synthgen, DatasetFilesAndDeterminism) {
  oracle::TempDir a("gen"), b("gen");
  const auto c = small_config(10);
  const auto m = generate_dataset(c, a.path(), 2);
  generate_dataset(c, b.path(), 1);
  ASSERT_EQ(m.entries.size(), 10u);
  for (const auto& e : m.entries) {
    EXPECT_TRUE(fs::exists(a.path() / e.image_path));
    EXPECT_TRUE(fs::exists(a.path() / e.mask_path));
    EXPECT_EQ(e.split, Split::Unassigned);
    for (const auto& p : e.particles) EXPECT_EQ(p.polymer, Polymer::PET);
    EXPECT_EQ(slurp(a.path() / e.image_path), slurp(b.path() / e.image_path));
    EXPECT_EQ(slurp(a.path() / e.mask_path), slurp(b.path() / e.mask_path));
  }
  EXPECT_EQ(slurp(a.path() / "manifest.jsonl"), slurp(b.path() / "manifest.jsonl"));
  const auto loaded = load_manifest(a.path() / "manifest.jsonl");
  EXPECT_EQ(loaded.entries.size(), 10u);
}

TEST(Synthgen, NonOverlappingCountsMatchGroundTruth) {
  auto c = preset("easy");
  for (int i = 0; i < 12; ++i) {
    const auto s = render(c, i);
    if (s.overlap) continue;
    EXPECT_EQ(connected_components(s.mask).size(), s.particles.size()) << "image " << i;
  }
}

namespace {
DatasetManifest dummy_manifest(int n) {
  DatasetManifest m;
  m.entries.resize(std::size_t(n));
  return m;
}
}  // namespace

TEST(Split, PaperSizedDataset) {
  const auto m = split_dataset(dummy_manifest(276), 0.8, 42);
  EXPECT_EQ(m.count(Split::Train), 221u);
  EXPECT_EQ(m.count(Split::Test), 55u);
}

TEST(Split, TenEntries) {
  const auto m = split_dataset(dummy_manifest(10), 0.8, 1);
  EXPECT_EQ(m.count(Split::Train), 8u);
  EXPECT_EQ(m.count(Split::Test), 2u);
}

TEST(Split, DegenerateFraction) {
  try {
    split_dataset(dummy_manifest(10), 0.999, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::DegenerateSplit);
  }
}

TEST(Split, SeededAndDisjoint) {
  const auto a = split_dataset(dummy_manifest(50), 0.8, 5);
  const auto b = split_dataset(dummy_manifest(50), 0.8, 5);
  const auto c = split_dataset(dummy_manifest(50), 0.8, 6);
  bool differs = false;
  for (std::size_t i = 0; i < 50; ++i) {
    EXPECT_EQ(a.entries[i].split, b.entries[i].split);
    EXPECT_NE(a.entries[i].split, Split::Unassigned);
    differs |= a.entries[i].split != c.entries[i].split;
  }
  EXPECT_TRUE(differs);
}

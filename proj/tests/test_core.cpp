#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "mdn/mdn.hpp"
#include "oracles.hpp"

using namespace mdn;

namespace {

FluorescenceImage raw_image(int w, int h, float fill = 0.0f) {
  return FluorescenceImage(Raster<float>(w, h, 3, fill), false);
}

template <typename F>
Errc error_code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected mdn::Error";
  return Errc::InvalidArgument;
}

}  // namespace

TEST(Core, ValidatePairAcceptsMatchingDims) {
  EXPECT_NO_THROW(validate_pair(raw_image(256, 256), BinaryMask(256, 256)));
}

TEST(Core, ValidatePairRejectsSizeMismatch) {
  EXPECT_EQ(error_code_of([] { validate_pair(raw_image(256, 256), BinaryMask(128, 128)); }),
            Errc::DimensionMismatch);
}

TEST(Core, ValidatePairRejectsNonBinaryMask) {
  Raster<std::uint8_t> labels(8, 8, 1, 0);
  labels(3, 3) = 7;
  EXPECT_EQ(error_code_of([&] { validate_pair(raw_image(8, 8), labels); }),
            Errc::ValueOutOfRange);
}

TEST(Core, ImageRangeChecks) {
  EXPECT_EQ(error_code_of([] { FluorescenceImage(Raster<float>(2, 2, 3, 1.5f), true); }),
            Errc::ValueOutOfRange);
  EXPECT_EQ(error_code_of([] { FluorescenceImage(Raster<float>(2, 2, 3, 0.5f), false); }),
            Errc::ValueOutOfRange);
  EXPECT_EQ(error_code_of([] { FluorescenceImage(Raster<float>(2, 2, 1, 0.0f), false); }),
            Errc::DimensionMismatch);
  EXPECT_EQ(error_code_of([] { FluorescenceImage(Raster<float>(2, 2, 3, 0.0f), false, 0.0); }),
            Errc::ValueOutOfRange);
}

TEST(Core, PolymerNominalSizes) {
  EXPECT_EQ(nominal_diameter_um(Polymer::HDPE), 500.0);
  EXPECT_EQ(nominal_diameter_um(Polymer::PET), 120.0);
  EXPECT_EQ(polymer_from_string("PET"), Polymer::PET);
  EXPECT_EQ(ParticleSpec{}.extent_px(5.0), 100.0);
}

TEST(Core, ParticleSpecValidation) {
  ParticleSpec p;
  p.eccentricity = 1.0;
  EXPECT_EQ(error_code_of([&] { p.validate(); }), Errc::ValueOutOfRange);
}

TEST(Pnm, ImageRoundTrip) {
  oracle::TempDir dir("pnm");
  std::vector<std::uint8_t> bytes(5 * 3 * 3);
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = std::uint8_t(i * 7);
  const auto img = FluorescenceImage::from_bytes(5, 3, bytes);
  pnm::write_image(dir.path() / "a.ppm", img);
  const auto back = pnm::read_image(dir.path() / "a.ppm");
  EXPECT_EQ(back.pixels(), img.pixels());
  EXPECT_FALSE(back.normalized());
}

TEST(Pnm, MaskRoundTripUses0And255) {
  oracle::TempDir dir("pnm");
  BinaryMask m(4, 2);
  Raster<std::uint8_t> r(4, 2, 1, 0);
  r(1, 1) = 1;
  m = BinaryMask(r);
  pnm::write_mask(dir.path() / "m.pgm", m);
  const auto raw = pnm::read(dir.path() / "m.pgm");
  EXPECT_EQ(raw(1, 1), 255);
  EXPECT_EQ(raw(0, 0), 0);
  EXPECT_EQ(pnm::read_mask(dir.path() / "m.pgm").labels(), m.labels());
}

TEST(Pnm, TruncatedFileFails) {
  oracle::TempDir dir("pnm");
  std::ofstream(dir.path() / "t.ppm", std::ios::binary) << "P6\n4 4\n255\nabc";
  EXPECT_EQ(error_code_of([&] { pnm::read(dir.path() / "t.ppm"); }), Errc::IoFailure);
}

TEST(Pnm, MaskWithGreyLevelsRejected) {
  oracle::TempDir dir("pnm");
  Raster<std::uint8_t> r(2, 2, 1, 0);
  r(0, 0) = 128;
  pnm::write(dir.path() / "g.pgm", r);
  EXPECT_EQ(error_code_of([&] { pnm::read_mask(dir.path() / "g.pgm"); }), Errc::ValueOutOfRange);
}

TEST(Manifest, SerializeParseRoundTrip) {
  DatasetManifest m;
  m.master_seed = 7;
  m.scale_um_per_px = 2.5;
  ManifestEntry e;
  e.image_path = "images/a.ppm";
  e.mask_path = "masks/a_mask.pgm";
  e.split = Split::Test;
  e.provenance = Provenance::Real;
  e.seed = 123456789012345ULL;
  e.overlap = true;
  ParticleSpec p;
  p.polymer = Polymer::PET;
  p.diameter_um = 118.5;
  p.center_x = 10.25;
  p.center_y = 3.5;
  p.eccentricity = 0.3;
  p.rotation = 1.0;
  p.peak_intensity = 0.7;
  e.particles = {p};
  m.entries = {e};
  std::istringstream in(serialize_manifest(m));
  const auto back = parse_manifest(in);
  ASSERT_EQ(back.entries.size(), 1u);
  EXPECT_EQ(back.master_seed, 7u);
  EXPECT_EQ(back.scale_um_per_px, 2.5);
  EXPECT_EQ(back.entries[0].particles[0], p);
  EXPECT_EQ(back.entries[0].split, Split::Test);
  EXPECT_EQ(back.entries[0].provenance, Provenance::Real);
  EXPECT_EQ(back.entries[0].seed, e.seed);
  EXPECT_TRUE(back.entries[0].overlap);
}

TEST(Manifest, MalformedLineIsParseError) {
  std::istringstream in("{\"record\":\"header\",\"master_seed\":1,\"scale_um_per_px\":5,"
                        "\"entry_count\":1}\n{not json\n");
  EXPECT_EQ(error_code_of([&] { parse_manifest(in); }), Errc::ParseError);
}

TEST(Manifest, MissingFilesAreIoFailure) {
  oracle::TempDir dir("manifest");
  DatasetManifest m;
  ManifestEntry e;
  e.image_path = "images/missing.ppm";
  e.mask_path = "masks/missing_mask.pgm";
  m.entries = {e};
  save_manifest(m, dir.path() / "manifest.jsonl");
  EXPECT_EQ(error_code_of([&] { load_manifest(dir.path() / "manifest.jsonl"); }),
            Errc::IoFailure);
}

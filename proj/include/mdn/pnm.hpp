#pragma once

// Binary PPM (P6, RGB) and PGM (P5, gray) reading and writing. Images are
// stored as 8-bit RGB PPM, masks as 8-bit PGM holding exactly {0,255}.

#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "mdn/core.hpp"

namespace mdn::pnm {

namespace detail {

inline void skip_space_and_comments(std::istream& in) {
  for (;;) {
    int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (c != EOF && std::isspace(c)) {
      in.get();
    } else {
      return;
    }
  }
}

inline int read_header_int(std::istream& in, const std::string& path) {
  skip_space_and_comments(in);
  int v = -1;
  in >> v;
  require(bool(in) && v >= 0, Errc::IoFailure, "malformed PNM header in " + path);
  return v;
}

inline void write_file(const std::filesystem::path& path, const std::string& header,
                       const std::uint8_t* data, std::size_t n) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(bool(out), Errc::IoFailure, "cannot open " + path.string() + " for writing");
  out << header;
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n));
  require(bool(out), Errc::IoFailure, "write failed for " + path.string());
}

}  // namespace detail

// Raw 8-bit raster with 1 (P5) or 3 (P6) channels.
inline Raster<std::uint8_t> read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(bool(in), Errc::IoFailure, "cannot open " + path.string());
  char magic[2] = {};
  in.read(magic, 2);
  require(bool(in) && magic[0] == 'P' && (magic[1] == '5' || magic[1] == '6'), Errc::IoFailure,
          path.string() + " is not a binary PGM/PPM file");
  const int channels = magic[1] == '6' ? 3 : 1;
  const int w = detail::read_header_int(in, path.string());
  const int h = detail::read_header_int(in, path.string());
  const int maxval = detail::read_header_int(in, path.string());
  require(w >= 1 && h >= 1, Errc::IoFailure, "empty raster in " + path.string());
  require(maxval == 255, Errc::IoFailure, "only 8-bit PNM is supported: " + path.string());
  in.get();  // single whitespace after maxval
  std::vector<std::uint8_t> data(static_cast<std::size_t>(w) * h * channels);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size()));
  require(in.gcount() == static_cast<std::streamsize>(data.size()), Errc::IoFailure,
          "truncated pixel data in " + path.string());
  return Raster<std::uint8_t>(w, h, channels, std::move(data));
}

inline void write(const std::filesystem::path& path, const Raster<std::uint8_t>& r) {
  require(r.channels() == 1 || r.channels() == 3, Errc::InvalidArgument,
          "PNM output needs 1 or 3 channels");
  const std::string header = std::string(r.channels() == 3 ? "P6" : "P5") + "\n" +
                             std::to_string(r.width()) + " " + std::to_string(r.height()) +
                             "\n255\n";
  detail::write_file(path, header, r.storage().data(), r.size());
}

// Gray inputs are replicated to three channels.
inline FluorescenceImage read_image(const std::filesystem::path& path,
                                    double scale_um_per_px = kDefaultScaleUmPerPx) {
  auto raw = read(path);
  if (raw.channels() == 3)
    return FluorescenceImage::from_bytes(raw.width(), raw.height(), raw.values(),
                                         scale_um_per_px);
  std::vector<std::uint8_t> rgb(raw.size() * 3);
  for (std::size_t i = 0; i < raw.size(); ++i)
    rgb[3 * i] = rgb[3 * i + 1] = rgb[3 * i + 2] = raw.storage()[i];
  return FluorescenceImage::from_bytes(raw.width(), raw.height(), rgb, scale_um_per_px);
}

// Raw images are written as-is; normalized ones are scaled by 255 and rounded.
inline void write_image(const std::filesystem::path& path, const FluorescenceImage& image) {
  const auto& px = image.pixels();
  Raster<std::uint8_t> out(px.width(), px.height(), px.channels());
  const float scale = image.normalized() ? 255.0f : 1.0f;
  for (std::size_t i = 0; i < px.size(); ++i)
    out.storage()[i] = static_cast<std::uint8_t>(std::lround(px.storage()[i] * scale));
  write(path, out);
}

inline BinaryMask read_mask(const std::filesystem::path& path) {
  auto raw = read(path);
  require(raw.channels() == 1, Errc::DimensionMismatch,
          "mask " + path.string() + " must be single-channel");
  Raster<std::uint8_t> labels(raw.width(), raw.height(), 1);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const auto v = raw.storage()[i];
    require(v == 0 || v == 255, Errc::ValueOutOfRange,
            "mask " + path.string() + " holds value " + std::to_string(int(v)));
    labels.storage()[i] = v ? 1 : 0;
  }
  return BinaryMask(std::move(labels));
}

inline void write_mask(const std::filesystem::path& path, const BinaryMask& mask) {
  Raster<std::uint8_t> out(mask.width(), mask.height(), 1);
  for (std::size_t i = 0; i < out.size(); ++i)
    out.storage()[i] = mask.labels().storage()[i] ? 255 : 0;
  write(path, out);
}

}  // namespace mdn::pnm

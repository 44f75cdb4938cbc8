#pragma once

// Dataset manifest: JSON Lines, first record is a header carrying
// master_seed and scale_um_per_px, then one record per (image, mask) pair.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mdn/core.hpp"

namespace mdn {

enum class Split { Unassigned, Train, Test };
enum class Provenance { Spiked, Real };

constexpr std::string_view to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Test: return "test";
    case Split::Unassigned: return "unassigned";
  }
  return "unassigned";
}

inline Split split_from_string(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "test") return Split::Test;
  if (s == "unassigned") return Split::Unassigned;
  fail(Errc::ParseError, "unknown split '" + std::string(s) + "'");
}

constexpr std::string_view to_string(Provenance p) {
  return p == Provenance::Spiked ? "spiked" : "real";
}

inline Provenance provenance_from_string(std::string_view s) {
  if (s == "spiked") return Provenance::Spiked;
  if (s == "real") return Provenance::Real;
  fail(Errc::ParseError, "unknown provenance '" + std::string(s) + "'");
}

struct ManifestEntry {
  std::string image_path;  // relative to the manifest directory unless absolute
  std::string mask_path;
  Split split = Split::Unassigned;
  Provenance provenance = Provenance::Spiked;
  std::vector<ParticleSpec> particles;
  std::uint64_t seed = 0;
  bool overlap = false;  // true when rendered particles touch and may merge

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::uint64_t master_seed = 0;
  double scale_um_per_px = kDefaultScaleUmPerPx;
  std::filesystem::path base_dir;  // where relative paths resolve; not serialized

  std::filesystem::path resolve(const std::string& p) const {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  }

  std::vector<const ManifestEntry*> select(Split split) const {
    std::vector<const ManifestEntry*> out;
    for (const auto& e : entries)
      if (e.split == split) out.push_back(&e);
    return out;
  }

  std::size_t count(Split split) const { return select(split).size(); }
};

inline void to_json(nlohmann::json& j, const ParticleSpec& p) {
  j = nlohmann::json{{"polymer", std::string(to_string(p.polymer))},
                     {"diameter_um", p.diameter_um},
                     {"center", {p.center_x, p.center_y}},
                     {"eccentricity", p.eccentricity},
                     {"rotation", p.rotation},
                     {"peak_intensity", p.peak_intensity}};
}

inline void from_json(const nlohmann::json& j, ParticleSpec& p) {
  p.polymer = polymer_from_string(j.at("polymer").get<std::string>());
  p.diameter_um = j.at("diameter_um").get<double>();
  const auto& c = j.at("center");
  require(c.is_array() && c.size() == 2, Errc::ParseError, "center must be [x, y]");
  p.center_x = c[0].get<double>();
  p.center_y = c[1].get<double>();
  p.eccentricity = j.at("eccentricity").get<double>();
  p.rotation = j.at("rotation").get<double>();
  p.peak_intensity = j.at("peak_intensity").get<double>();
  p.validate();
}

inline nlohmann::json entry_to_json(const ManifestEntry& e) {
  return nlohmann::json{{"image_path", e.image_path},
                        {"mask_path", e.mask_path},
                        {"split", std::string(to_string(e.split))},
                        {"provenance", std::string(to_string(e.provenance))},
                        {"particles", e.particles},
                        {"seed", e.seed},
                        {"overlap", e.overlap}};
}

inline ManifestEntry entry_from_json(const nlohmann::json& j) {
  ManifestEntry e;
  e.image_path = j.at("image_path").get<std::string>();
  e.mask_path = j.at("mask_path").get<std::string>();
  e.split = split_from_string(j.at("split").get<std::string>());
  e.provenance = provenance_from_string(j.at("provenance").get<std::string>());
  e.particles = j.at("particles").get<std::vector<ParticleSpec>>();
  e.seed = j.at("seed").get<std::uint64_t>();
  e.overlap = j.value("overlap", false);
  return e;
}

inline std::string serialize_manifest(const DatasetManifest& m) {
  std::ostringstream out;
  nlohmann::json header{{"record", "header"},
                        {"master_seed", m.master_seed},
                        {"scale_um_per_px", m.scale_um_per_px},
                        {"entry_count", m.entries.size()}};
  out << header.dump() << '\n';
  for (const auto& e : m.entries) out << entry_to_json(e).dump() << '\n';
  return out.str();
}

// Parses manifest text without touching the filesystem.
inline DatasetManifest parse_manifest(std::istream& in) {
  DatasetManifest m;
  std::string line;
  bool have_header = false;
  std::size_t line_no = 0;
  try {
    while (std::getline(in, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      auto j = nlohmann::json::parse(line);
      if (!have_header) {
        require(j.value("record", "") == "header", Errc::ParseError,
                "manifest must start with a header record");
        m.master_seed = j.at("master_seed").get<std::uint64_t>();
        m.scale_um_per_px = j.at("scale_um_per_px").get<double>();
        require(m.scale_um_per_px > 0.0, Errc::ValueOutOfRange, "scale_um_per_px must be > 0");
        have_header = true;
        continue;
      }
      m.entries.push_back(entry_from_json(j));
    }
  } catch (const nlohmann::json::exception& ex) {
    fail(Errc::ParseError, "manifest line " + std::to_string(line_no) + ": " + ex.what());
  }
  require(have_header, Errc::ParseError, "manifest has no header record");
  return m;
}

inline void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(bool(out), Errc::IoFailure, "cannot write manifest " + path.string());
  out << serialize_manifest(m);
  require(bool(out), Errc::IoFailure, "write failed for " + path.string());
}

// Loads and checks that every referenced file exists.
inline DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(bool(in), Errc::IoFailure, "cannot open manifest " + path.string());
  auto m = parse_manifest(in);
  m.base_dir = path.parent_path();
  for (const auto& e : m.entries) {
    for (const auto& p : {e.image_path, e.mask_path})
      require(std::filesystem::exists(m.resolve(p)), Errc::IoFailure,
              "manifest references missing file " + m.resolve(p).string());
  }
  return m;
}

}  // namespace mdn

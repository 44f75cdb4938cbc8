#pragma once

// Deterministic synthetic stand-in for spiked Nile-Red fluorescence images:
// rotated soft-edged elliptical particles over a blotchy autofluorescent
// background with Poisson and Gaussian sensor noise.

#include <algorithm>
#include <array>
#include <cstdio>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mdn/core.hpp"
#include "mdn/manifest.hpp"
#include "mdn/parallel.hpp"
#include "mdn/pnm.hpp"

namespace mdn {

struct IntRange {
  int min = 0;
  int max = 0;
  friend bool operator==(const IntRange&, const IntRange&) = default;
};

struct RealRange {
  double min = 0.0;
  double max = 0.0;
  friend bool operator==(const RealRange&, const RealRange&) = default;
};

struct BackgroundConfig {
  double base_intensity = 0.05;
  IntRange autofluorescence_blob_count{2, 5};
  double blob_intensity = 0.15;
  friend bool operator==(const BackgroundConfig&, const BackgroundConfig&) = default;
};

struct NoiseConfig {
  double gaussian_sigma = 0.03;
  bool poisson_enabled = true;
  double poisson_photons = 400.0;  // photon count at intensity 1.0
  friend bool operator==(const NoiseConfig&, const NoiseConfig&) = default;
};

struct GenConfig {
  int n_images = 250;
  int image_w = 256;
  int image_h = 256;
  IntRange particles_per_image{1, 4};
  std::map<Polymer, double> polymer_mix{{Polymer::HDPE, 0.3}, {Polymer::PET, 0.7}};
  BackgroundConfig background;
  NoiseConfig noise;
  std::uint64_t master_seed = 42;
  double scale_um_per_px = kDefaultScaleUmPerPx;

  RealRange peak_intensity{0.6, 1.0};
  double diameter_jitter = 0.2;  // relative, diameter ~ nominal * U[1-j, 1+j]
  double eccentricity_max = 0.7;
  double edge_sigma_px = 1.5;
  bool allow_overlap = false;
  double train_fraction = 0.8;
  Provenance provenance = Provenance::Spiked;

  friend bool operator==(const GenConfig&, const GenConfig&) = default;
};

inline constexpr double kMinContrastGap = 0.2;

// Throws InvalidConfig on any violated constraint. Particles must out-shine
// the background: peak floor exceeds the background ceiling by at least 0.2,
// and half the peak floor (the mask threshold) is at least the blob ceiling.
inline void validate(const GenConfig& c) {
  auto bad = [](const std::string& what) { fail(Errc::InvalidConfig, what); };
  if (c.n_images < 1) bad("n_images must be >= 1");
  if (c.image_w < 1 || c.image_h < 1) bad("image dimensions must be >= 1");
  if (c.particles_per_image.min < 0 || c.particles_per_image.max < c.particles_per_image.min)
    bad("particles_per_image must be a valid non-negative range");
  double total = 0.0;
  for (auto [poly, w] : c.polymer_mix) {
    if (w < 0.0) bad("polymer_mix weights must be non-negative");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) bad("polymer_mix weights must sum to 1");
  const auto& bg = c.background;
  if (bg.base_intensity < 0.0 || bg.base_intensity > 1.0) bad("base_intensity must be in [0,1]");
  if (bg.blob_intensity < 0.0 || bg.blob_intensity > 1.0) bad("blob_intensity must be in [0,1]");
  if (bg.autofluorescence_blob_count.min < 0 ||
      bg.autofluorescence_blob_count.max < bg.autofluorescence_blob_count.min)
    bad("autofluorescence_blob_count must be a valid range");
  if (c.noise.gaussian_sigma < 0.0) bad("gaussian_sigma must be >= 0");
  if (c.noise.poisson_enabled && c.noise.poisson_photons <= 0.0)
    bad("poisson_photons must be > 0");
  if (!(c.scale_um_per_px > 0.0)) bad("scale_um_per_px must be > 0");
  if (c.peak_intensity.min <= 0.0 || c.peak_intensity.max > 1.0 ||
      c.peak_intensity.max < c.peak_intensity.min)
    bad("peak_intensity must be a range inside (0,1]");
  if (c.peak_intensity.min - (bg.base_intensity + bg.blob_intensity) < kMinContrastGap - 1e-12)
    bad("particle peak floor must exceed the background ceiling by at least 0.2");
  if (0.5 * c.peak_intensity.min < bg.blob_intensity)
    bad("half the particle peak floor must be >= blob_intensity");
  if (c.diameter_jitter < 0.0 || c.diameter_jitter >= 1.0) bad("diameter_jitter must be in [0,1)");
  if (c.eccentricity_max < 0.0 || c.eccentricity_max >= 1.0)
    bad("eccentricity_max must be in [0,1)");
  if (!(c.edge_sigma_px > 0.0)) bad("edge_sigma_px must be > 0");
  if (!(c.train_fraction > 0.0 && c.train_fraction < 1.0)) bad("train_fraction must be in (0,1)");
}

inline GenConfig preset(std::string_view name) {
  GenConfig c;
  if (name == "easy") return c;
  if (name == "hard") {
    c.background = {0.08, {6, 12}, 0.25};
    c.noise = {0.06, true, 150.0};
    c.peak_intensity = {0.55, 1.0};
    c.particles_per_image = {1, 6};
    c.allow_overlap = true;
    c.provenance = Provenance::Real;
    return c;
  }
  fail(Errc::InvalidConfig, "unknown preset '" + std::string(name) + "'");
}

// --- config file mapping (field names match GenConfig) -----------------------

inline nlohmann::json to_json(const GenConfig& c) {
  nlohmann::json mix = nlohmann::json::object();
  for (auto [poly, w] : c.polymer_mix) mix[std::string(to_string(poly))] = w;
  return {
      {"n_images", c.n_images},
      {"image_w", c.image_w},
      {"image_h", c.image_h},
      {"particles_per_image", {c.particles_per_image.min, c.particles_per_image.max}},
      {"polymer_mix", mix},
      {"background",
       {{"base_intensity", c.background.base_intensity},
        {"autofluorescence_blob_count",
         {c.background.autofluorescence_blob_count.min,
          c.background.autofluorescence_blob_count.max}},
        {"blob_intensity", c.background.blob_intensity}}},
      {"noise",
       {{"gaussian_sigma", c.noise.gaussian_sigma},
        {"poisson_enabled", c.noise.poisson_enabled},
        {"poisson_photons", c.noise.poisson_photons}}},
      {"master_seed", c.master_seed},
      {"scale_um_per_px", c.scale_um_per_px},
      {"peak_intensity", {c.peak_intensity.min, c.peak_intensity.max}},
      {"diameter_jitter", c.diameter_jitter},
      {"eccentricity_max", c.eccentricity_max},
      {"edge_sigma_px", c.edge_sigma_px},
      {"allow_overlap", c.allow_overlap},
      {"train_fraction", c.train_fraction},
      {"provenance", std::string(to_string(c.provenance))},
  };
}

namespace detail {
inline IntRange int_range(const nlohmann::json& j) {
  require(j.is_array() && j.size() == 2, Errc::ParseError, "range must be [min, max]");
  return {j[0].get<int>(), j[1].get<int>()};
}
inline RealRange real_range(const nlohmann::json& j) {
  require(j.is_array() && j.size() == 2, Errc::ParseError, "range must be [min, max]");
  return {j[0].get<double>(), j[1].get<double>()};
}
}  // namespace detail

// Fields missing from `j` keep the values already in `base`; unknown fields are rejected.
inline GenConfig gen_config_from_json(const nlohmann::json& j, GenConfig base = {}) {
  static const std::array<std::string_view, 18> known = {
      "n_images",         "image_w",          "image_h",        "particles_per_image",
      "polymer_mix",      "background",       "noise",          "master_seed",
      "scale_um_per_px",  "peak_intensity",   "diameter_jitter", "eccentricity_max",
      "edge_sigma_px",    "allow_overlap",    "train_fraction", "provenance",
      "preset",           "comment"};
  GenConfig c = base;
  try {
    require(j.is_object(), Errc::ParseError, "generator config must be an object");
    for (auto it = j.begin(); it != j.end(); ++it)
      require(std::find(known.begin(), known.end(), it.key()) != known.end(), Errc::ParseError,
              "unknown generator config field '" + it.key() + "'");
    if (j.contains("n_images")) c.n_images = j["n_images"].get<int>();
    if (j.contains("image_w")) c.image_w = j["image_w"].get<int>();
    if (j.contains("image_h")) c.image_h = j["image_h"].get<int>();
    if (j.contains("particles_per_image"))
      c.particles_per_image = detail::int_range(j["particles_per_image"]);
    if (j.contains("polymer_mix")) {
      c.polymer_mix.clear();
      for (auto it = j["polymer_mix"].begin(); it != j["polymer_mix"].end(); ++it) {
        const auto poly = polymer_from_string(it.key());
        require(poly != Polymer::OTHER, Errc::InvalidConfig,
                "polymer_mix covers HDPE and PET only");
        c.polymer_mix[poly] = it.value().get<double>();
      }
    }
    if (j.contains("background")) {
      const auto& b = j["background"];
      if (b.contains("base_intensity")) c.background.base_intensity = b["base_intensity"];
      if (b.contains("autofluorescence_blob_count"))
        c.background.autofluorescence_blob_count =
            detail::int_range(b["autofluorescence_blob_count"]);
      if (b.contains("blob_intensity")) c.background.blob_intensity = b["blob_intensity"];
    }
    if (j.contains("noise")) {
      const auto& n = j["noise"];
      if (n.contains("gaussian_sigma")) c.noise.gaussian_sigma = n["gaussian_sigma"];
      if (n.contains("poisson_enabled")) c.noise.poisson_enabled = n["poisson_enabled"];
      if (n.contains("poisson_photons")) c.noise.poisson_photons = n["poisson_photons"];
    }
    if (j.contains("master_seed")) c.master_seed = j["master_seed"].get<std::uint64_t>();
    if (j.contains("scale_um_per_px")) c.scale_um_per_px = j["scale_um_per_px"];
    if (j.contains("peak_intensity")) c.peak_intensity = detail::real_range(j["peak_intensity"]);
    if (j.contains("diameter_jitter")) c.diameter_jitter = j["diameter_jitter"];
    if (j.contains("eccentricity_max")) c.eccentricity_max = j["eccentricity_max"];
    if (j.contains("edge_sigma_px")) c.edge_sigma_px = j["edge_sigma_px"];
    if (j.contains("allow_overlap")) c.allow_overlap = j["allow_overlap"];
    if (j.contains("train_fraction")) c.train_fraction = j["train_fraction"];
    if (j.contains("provenance"))
      c.provenance = provenance_from_string(j["provenance"].get<std::string>());
  } catch (const nlohmann::json::exception& ex) {
    fail(Errc::ParseError, std::string("generator config: ") + ex.what());
  }
  return c;
}

// --- seeding -----------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t image_seed(std::uint64_t master_seed, int index) {
  return splitmix64(master_seed ^ splitmix64(static_cast<std::uint64_t>(index)));
}

// --- rendering ---------------------------------------------------------------

// RGB weights of the rendered emission (orange-red); the red channel carries
// the scalar intensity.
inline constexpr std::array<double, 3> kEmissionTint{1.0, 0.55, 0.2};

struct SyntheticSample {
  FluorescenceImage image;
  BinaryMask mask;
  std::vector<ParticleSpec> particles;
  bool overlap = false;
  std::uint64_t seed = 0;
  Raster<float> clean;       // pre-noise scalar intensity
  Raster<float> background;  // pre-noise background only
};

struct EllipseGeometry {
  double cx, cy, a, b, cos_t, sin_t;

  explicit EllipseGeometry(const ParticleSpec& p, double scale) {
    cx = p.center_x;
    cy = p.center_y;
    a = 0.5 * p.diameter_um / scale;
    b = a * std::sqrt(1.0 - p.eccentricity * p.eccentricity);
    cos_t = std::cos(p.rotation);
    sin_t = std::sin(p.rotation);
  }

  // Normalized radius: < 1 inside the ellipse.
  double radius(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    const double u = dx * cos_t + dy * sin_t;
    const double v = -dx * sin_t + dy * cos_t;
    return std::sqrt((u / a) * (u / a) + (v / b) * (v / b));
  }

  double distance(double x, double y) const { return std::hypot(x - cx, y - cy); }
};

// Particle intensity at pixel centre (x, y): a Gaussian-CDF edge that is
// exactly half the peak on the ellipse boundary.
inline double particle_contribution(const ParticleSpec& p, const EllipseGeometry& g, double x,
                                    double y, double edge_sigma) {
  const double r = g.radius(x, y);
  if (r == 0.0) return p.peak_intensity * 0.5 * std::erfc(-g.b / (std::numbers::sqrt2 * edge_sigma));
  const double d = g.distance(x, y) * (1.0 - 1.0 / r);  // signed distance to the boundary
  return p.peak_intensity * 0.5 * std::erfc(d / (std::numbers::sqrt2 * edge_sigma));
}

namespace detail {

inline Polymer sample_polymer(const GenConfig& c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double t = u(rng);
  double acc = 0.0;
  Polymer last = Polymer::HDPE;
  for (auto [poly, w] : c.polymer_mix) {
    if (w <= 0.0) continue;
    acc += w;
    last = poly;
    if (t < acc) return poly;
  }
  return last;
}

inline bool separated(const ParticleSpec& p, const std::vector<ParticleSpec>& placed,
                      double scale) {
  const double ra = 0.5 * p.diameter_um / scale;
  for (const auto& q : placed) {
    const double rb = 0.5 * q.diameter_um / scale;
    if (std::hypot(p.center_x - q.center_x, p.center_y - q.center_y) <= ra + rb + 2.0)
      return false;
  }
  return true;
}

}  // namespace detail

inline SyntheticSample render(const GenConfig& config, int index) {
  validate(config);
  require(index >= 0 && index < config.n_images, Errc::InvalidArgument,
          "image index out of range");
  const int w = config.image_w, h = config.image_h;
  const double scale = config.scale_um_per_px;
  SyntheticSample s;
  s.seed = image_seed(config.master_seed, index);
  std::mt19937_64 rng(s.seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };

  // Particles.
  const int n_particles = std::uniform_int_distribution<int>(config.particles_per_image.min,
                                                             config.particles_per_image.max)(rng);
  for (int i = 0; i < n_particles; ++i) {
    ParticleSpec p;
    p.polymer = detail::sample_polymer(config, rng);
    p.diameter_um = nominal_diameter_um(p.polymer) *
                    uniform(1.0 - config.diameter_jitter, 1.0 + config.diameter_jitter);
    p.eccentricity = uniform(0.0, config.eccentricity_max);
    p.rotation = uniform(0.0, std::numbers::pi);
    p.peak_intensity = uniform(config.peak_intensity.min, config.peak_intensity.max);
    const double extent = p.extent_px(scale);
    const double minor = extent * std::sqrt(1.0 - p.eccentricity * p.eccentricity);
    require(extent >= 1.0 && minor >= 1.0, Errc::ParticleTooSmall,
            "particle of " + std::to_string(p.diameter_um) + " um renders below 1 px");
    const double half = 0.5 * extent + 1.0;
    for (int attempt = 0; attempt < 200; ++attempt) {
      p.center_x = 2.0 * half < w ? uniform(half, w - half) : 0.5 * w;
      p.center_y = 2.0 * half < h ? uniform(half, h - half) : 0.5 * h;
      if (config.allow_overlap || detail::separated(p, s.particles, scale)) break;
    }
    s.particles.push_back(p);
  }

  // Background: base level plus the brightest of a few broad Gaussian blobs.
  s.background = Raster<float>(w, h, 1, float(config.background.base_intensity));
  const int n_blobs = std::uniform_int_distribution<int>(
      config.background.autofluorescence_blob_count.min,
      config.background.autofluorescence_blob_count.max)(rng);
  std::vector<std::array<double, 4>> blobs;  // cx, cy, sigma, intensity
  for (int i = 0; i < n_blobs; ++i)
    blobs.push_back({uniform(0.0, w), uniform(0.0, h), uniform(8.0, 32.0),
                     config.background.blob_intensity * uniform(0.5, 1.0)});
  if (!blobs.empty()) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double best = 0.0;
        for (const auto& [bx, by, bs, bi] : blobs) {
          const double d2 = (x - bx) * (x - bx) + (y - by) * (y - by);
          best = std::max(best, bi * std::exp(-d2 / (2.0 * bs * bs)));
        }
        s.background(x, y) = float(config.background.base_intensity + best);
      }
  }

  // Particle layer, mask and per-pixel ownership for overlap detection.
  s.clean = s.background;
  Raster<int> owner(w, h, 1, -1);
  Raster<std::uint8_t> labels(w, h, 1, 0);
  const double sigma = config.edge_sigma_px;
  for (std::size_t i = 0; i < s.particles.size(); ++i) {
    const auto& p = s.particles[i];
    const EllipseGeometry g(p, scale);
    const double reach = g.a + 6.0 * sigma;
    const int x0 = std::max(0, int(std::floor(g.cx - reach)));
    const int x1 = std::min(w - 1, int(std::ceil(g.cx + reach)));
    const int y0 = std::max(0, int(std::floor(g.cy - reach)));
    const int y1 = std::min(h - 1, int(std::ceil(g.cy + reach)));
    int inside = 0;
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        s.clean(x, y) += float(particle_contribution(p, g, x, y, sigma));
        if (g.radius(x, y) < 1.0) {
          ++inside;
          labels(x, y) = 1;
          if (owner(x, y) >= 0 && owner(x, y) != int(i)) s.overlap = true;
          owner(x, y) = int(i);
        }
      }
    require(inside > 0, Errc::ParticleTooSmall, "particle renders no mask pixels");
  }
  for (auto& v : s.clean.storage()) v = std::clamp(v, 0.0f, 1.0f);
  // Distinct particles whose masks touch (8-neighbourhood) merge into one component.
  for (int y = 0; y < h && !s.overlap; ++y)
    for (int x = 0; x < w && !s.overlap; ++x) {
      const int o = owner(x, y);
      if (o < 0) continue;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int nx = x + dx, ny = y + dy;
          if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
          const int q = owner(nx, ny);
          if (q >= 0 && q != o) s.overlap = true;
        }
    }
  s.mask = BinaryMask(std::move(labels));

  // Sensor noise per channel, then 8-bit quantization.
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<std::uint8_t> rgb(std::size_t(w) * h * 3);
  for (std::size_t i = 0; i < s.clean.size(); ++i) {
    for (int c = 0; c < 3; ++c) {
      double v = kEmissionTint[std::size_t(c)] * s.clean.storage()[i];
      if (config.noise.poisson_enabled) {
        const double lambda = v * config.noise.poisson_photons;
        v = lambda > 0.0
                ? double(std::poisson_distribution<long>(lambda)(rng)) / config.noise.poisson_photons
                : 0.0;
      }
      if (config.noise.gaussian_sigma > 0.0) v += config.noise.gaussian_sigma * gauss(rng);
      rgb[3 * i + std::size_t(c)] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    }
  }
  s.image = FluorescenceImage::from_bytes(w, h, rgb, scale);
  return s;
}

struct GeneratedImage {
  FluorescenceImage image;
  BinaryMask mask;
  std::vector<ParticleSpec> particles;
};

inline GeneratedImage generate_image(const GenConfig& config, int index) {
  auto s = render(config, index);
  return {std::move(s.image), std::move(s.mask), std::move(s.particles)};
}

inline std::string image_stem(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "img_%05d", index);
  return buf;
}

// Writes images/, masks/ and manifest.jsonl under out_dir. Entries start
// unassigned; split_dataset tags them.
inline DatasetManifest generate_dataset(const GenConfig& config,
                                        const std::filesystem::path& out_dir, int workers = 0) {
  validate(config);
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "images", ec);
  require(!ec, Errc::IoFailure, "cannot create " + (out_dir / "images").string());
  std::filesystem::create_directories(out_dir / "masks", ec);
  require(!ec, Errc::IoFailure, "cannot create " + (out_dir / "masks").string());

  DatasetManifest m;
  m.master_seed = config.master_seed;
  m.scale_um_per_px = config.scale_um_per_px;
  m.base_dir = out_dir;
  m.entries.resize(std::size_t(config.n_images));
  parallel_for(config.n_images, worker_count(workers), [&](int i) {
    auto s = render(config, i);
    const std::string stem = image_stem(i);
    ManifestEntry e;
    e.image_path = "images/" + stem + ".ppm";
    e.mask_path = "masks/" + stem + "_mask.pgm";
    e.provenance = config.provenance;
    e.particles = s.particles;
    e.seed = s.seed;
    e.overlap = s.overlap;
    pnm::write_image(out_dir / e.image_path, s.image);
    pnm::write_mask(out_dir / e.mask_path, s.mask);
    m.entries[std::size_t(i)] = std::move(e);
  });
  save_manifest(m, out_dir / "manifest.jsonl");
  return m;
}

// Seeded shuffle, then the first round(f * n) entries become train.
inline DatasetManifest split_dataset(const DatasetManifest& manifest, double train_fraction,
                                     std::uint64_t seed) {
  require(train_fraction > 0.0 && train_fraction < 1.0, Errc::InvalidArgument,
          "train_fraction must lie in (0,1)");
  const std::size_t n = manifest.entries.size();
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * double(n)));
  require(n_train >= 1 && n_train < n, Errc::DegenerateSplit,
          "split of " + std::to_string(n) + " entries at " + std::to_string(train_fraction) +
              " leaves one side empty");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  DatasetManifest out = manifest;
  for (std::size_t k = 0; k < n; ++k)
    out.entries[order[k]].split = k < n_train ? Split::Train : Split::Test;
  return out;
}

}  // namespace mdn

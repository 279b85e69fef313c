#include "mcd/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "mcd/errors.hpp"
#include "mcd/image_io.hpp"
#include "mcd/mirp.hpp"
#include "mcd/rng.hpp"

namespace mcd {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Geometry {
  double cx, cy, ax, ay, band_outer;
  double rho(double x, double y) const {
    const double dx = (x - cx) / ax;
    const double dy = (y - cy) / ay;
    return std::sqrt(dx * dx + dy * dy);
  }
};

int clamp255(double v) { return std::clamp(static_cast<int>(std::lround(v)), 0, 255); }

}  // namespace

SynthSample generate_sample(const SynthConfig& cfg, int index) {
  if (cfg.width < 64 || cfg.height < 64) throw DataError("SynthConfig: image too small");
  Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(index)));
  const Geometry geo{cfg.width / 2.0, cfg.chamber_center_y * cfg.height,
                     cfg.chamber_axis_x * cfg.width, cfg.chamber_axis_y * cfg.height,
                     1.0 + cfg.band_thickness};

  SynthSample s;
  {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "synth_%04d", index);
    s.id = buf;
  }
  s.image = GrayImage::filled(cfg.width, cfg.height, 0);
  s.ac_mask_gt = BinaryMask::filled(cfg.width, cfg.height, false);
  s.segment_mask_gt = BinaryMask::filled(cfg.width, cfg.height, false);

  // Scene: dark chamber inside a bright band inside dark background.
  for (int y = 0; y < cfg.height; ++y) {
    for (int x = 0; x < cfg.width; ++x) {
      const double rho = geo.rho(x, y);
      int v;
      if (rho < 1.0) {
        v = cfg.chamber_level + rng.uniform_int(-cfg.chamber_noise, cfg.chamber_noise);
        s.ac_mask_gt.set(x, y, true);
      } else if (rho <= geo.band_outer) {
        v = cfg.band_level + rng.uniform_int(-cfg.band_noise, cfg.band_noise);
        s.segment_mask_gt.set(x, y, true);
      } else {
        v = cfg.background_level + rng.uniform_int(-cfg.background_noise, cfg.background_noise);
      }
      s.image.at(x, y) = static_cast<std::uint8_t>(std::clamp(v, 0, 255));
    }
  }

  // Cell centers first (speckle suppression needs them), pixels later.
  const int n_cells = rng.uniform_int(cfg.cell_count_min, cfg.cell_count_max);
  std::vector<std::pair<double, double>> centers;
  {
    long attempts = 200L * n_cells + 200;
    while (static_cast<int>(centers.size()) < n_cells && attempts-- > 0) {
      const double x = rng.uniform(geo.cx - geo.ax, geo.cx + geo.ax);
      const double y = rng.uniform(geo.cy - geo.ay, geo.cy + geo.ay);
      if (geo.rho(x, y) > 0.85) continue;  // keep off the chamber wall
      bool ok = true;
      for (const auto& [ox, oy] : centers) {
        const double dx = x - ox, dy = y - oy;
        if (dx * dx + dy * dy < cfg.cell_min_separation * cfg.cell_min_separation) {
          ok = false;
          break;
        }
      }
      if (ok) centers.emplace_back(x, y);
    }
    if (static_cast<int>(centers.size()) < n_cells) {
      throw ComputeError("synth: infeasible cell placement (too many cells for chamber area)");
    }
  }

  // Speckle spikes, kept clear of cell neighborhoods.
  const auto near_cell = [&](int x, int y) {
    for (const auto& [ox, oy] : centers) {
      if (std::abs(x - ox) < cfg.cell_noise_clearance &&
          std::abs(y - oy) < cfg.cell_noise_clearance) {
        return true;
      }
    }
    return false;
  };
  const double chamber_area = M_PI * geo.ax * geo.ay;
  const double total_area = static_cast<double>(cfg.width) * cfg.height;
  const int n_inside = rng.poisson(cfg.speckle_density_inside * chamber_area);
  const int n_outside = rng.poisson(cfg.speckle_density_outside * (total_area - chamber_area));

  // Spike intensities are anchored to the base scene's threshold.
  const int t_base = otsu_threshold(histogram(s.image));
  static constexpr int nx_off[4] = {1, 0, -1, 0};
  static constexpr int ny_off[4] = {0, 1, 0, -1};
  const auto place_spikes = [&](int count, bool inside) {
    int placed = 0;
    long attempts = 300L * count + 100;
    while (placed < count && attempts-- > 0) {
      const int x = rng.uniform_int(1, cfg.width - 2);
      const int y = rng.uniform_int(1, cfg.height - 2);
      if ((geo.rho(x, y) < 1.0) != inside) continue;
      if (near_cell(x, y)) continue;
      const int v = clamp255(rng.uniform(cfg.speckle_gain_min, cfg.speckle_gain_max) * t_base);
      s.image.at(x, y) = static_cast<std::uint8_t>(std::max<int>(v, s.image.at(x, y)));
      s.noise_points.emplace_back(x, y);
      if (rng.bernoulli(0.35)) {  // occasional 2-3 px blob
        const int d = rng.uniform_int(0, 3);
        const int nx = x + nx_off[d], ny = y + ny_off[d];
        const int v2 = clamp255(v * rng.uniform(0.8, 1.0));
        s.image.at(nx, ny) = static_cast<std::uint8_t>(std::max<int>(v2, s.image.at(nx, ny)));
        if (rng.bernoulli(0.3)) {
          const int d2 = rng.uniform_int(0, 3);
          const int mx = x + nx_off[d2], my = y + ny_off[d2];
          const int v3 = clamp255(v * rng.uniform(0.8, 1.0));
          s.image.at(mx, my) = static_cast<std::uint8_t>(std::max<int>(v3, s.image.at(mx, my)));
        }
      }
      ++placed;
    }
  };
  place_spikes(n_inside, true);
  place_spikes(n_outside, false);

  // Cells as Gaussian blobs relative to the threshold of the speckled scene.
  const int t_scene = otsu_threshold(histogram(s.image));
  for (const auto& [cx, cy] : centers) {
    PlantedCell cell;
    cell.cx = cx;
    cell.cy = cy;
    cell.dim = rng.bernoulli(cfg.dim_cell_fraction);
    const double gain = cell.dim ? rng.uniform(cfg.dim_cell_gain_min, cfg.dim_cell_gain_max)
                                 : rng.uniform(cfg.bright_cell_gain_min, cfg.bright_cell_gain_max);
    cell.peak = clamp255(gain * t_scene);
    cell.sigma = rng.uniform(cfg.cell_sigma_min, cfg.cell_sigma_max);

    const int radius = static_cast<int>(std::ceil(3.2 * cell.sigma)) + 1;
    const int ix = round_half_away(cx), iy = round_half_away(cy);
    for (int y = iy - radius; y <= iy + radius; ++y) {
      for (int x = ix - radius; x <= ix + radius; ++x) {
        if (!s.image.in_bounds(x, y)) continue;
        const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
        const int v = static_cast<int>(std::lround(cell.peak * std::exp(-d2 / (2 * cell.sigma * cell.sigma))));
        if (v <= 0) continue;
        if (v >= (cell.peak + 1) / 2) ++cell.core_area;
        s.image.at(x, y) = static_cast<std::uint8_t>(std::max<int>(v, s.image.at(x, y)));
      }
    }
    s.cells.push_back(cell);
    s.cells_gt.points.emplace_back(ix, iy);
  }
  s.cells_gt.image_id = s.id;
  s.cells_gt.boxes =
      boxes_from_points(s.cells_gt.points, cfg.box_w, cfg.box_h, cfg.width, cfg.height);
  return s;
}

std::vector<SynthSample> generate(const SynthConfig& cfg, int n) {
  if (n < 1) throw DataError("generate: n must be >= 1");
  std::vector<SynthSample> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) out.push_back(generate_sample(cfg, i));
  return out;
}

std::string synth_config_to_json(const SynthConfig& cfg) {
  json j;
  j["width"] = cfg.width;
  j["height"] = cfg.height;
  j["cell_count_min"] = cfg.cell_count_min;
  j["cell_count_max"] = cfg.cell_count_max;
  j["cell_sigma_min"] = cfg.cell_sigma_min;
  j["cell_sigma_max"] = cfg.cell_sigma_max;
  j["bright_cell_gain_min"] = cfg.bright_cell_gain_min;
  j["bright_cell_gain_max"] = cfg.bright_cell_gain_max;
  j["dim_cell_gain_min"] = cfg.dim_cell_gain_min;
  j["dim_cell_gain_max"] = cfg.dim_cell_gain_max;
  j["dim_cell_fraction"] = cfg.dim_cell_fraction;
  j["cell_min_separation"] = cfg.cell_min_separation;
  j["speckle_density_inside"] = cfg.speckle_density_inside;
  j["speckle_density_outside"] = cfg.speckle_density_outside;
  j["speckle_gain_min"] = cfg.speckle_gain_min;
  j["speckle_gain_max"] = cfg.speckle_gain_max;
  j["cell_noise_clearance"] = cfg.cell_noise_clearance;
  j["background_level"] = cfg.background_level;
  j["background_noise"] = cfg.background_noise;
  j["chamber_level"] = cfg.chamber_level;
  j["chamber_noise"] = cfg.chamber_noise;
  j["band_level"] = cfg.band_level;
  j["band_noise"] = cfg.band_noise;
  j["chamber_axis_x"] = cfg.chamber_axis_x;
  j["chamber_axis_y"] = cfg.chamber_axis_y;
  j["chamber_center_y"] = cfg.chamber_center_y;
  j["band_thickness"] = cfg.band_thickness;
  j["box_w"] = cfg.box_w;
  j["box_h"] = cfg.box_h;
  j["seed"] = cfg.seed;
  return j.dump(2);
}

void write_corpus(const std::vector<SynthSample>& samples, const SynthConfig& cfg,
                  const std::string& dir) {
  const fs::path root(dir);
  std::error_code ec;
  for (const char* sub : {"images", "masks_ac", "masks_segment", "annotations"}) {
    fs::create_directories(root / sub, ec);
    if (ec) throw DataError("cannot create corpus directory " + (root / sub).string());
  }
  json manifest;
  manifest["config"] = json::parse(synth_config_to_json(cfg));
  json ids = json::array();
  for (const auto& s : samples) {
    save_png_gray(s.image, (root / "images" / (s.id + ".png")).string());
    save_mask_png(s.ac_mask_gt, (root / "masks_ac" / (s.id + ".png")).string());
    save_mask_png(s.segment_mask_gt, (root / "masks_segment" / (s.id + ".png")).string());
    write_annotations({s.cells_gt}, (root / "annotations" / (s.id + ".txt")).string());
    ids.push_back(s.id);
  }
  manifest["ids"] = ids;
  std::ofstream out(root / "manifest.json");
  if (!out || !(out << manifest.dump(2) << "\n")) {
    throw DataError("cannot write manifest in " + dir);
  }
}

}  // namespace mcd

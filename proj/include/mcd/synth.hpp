#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mcd/eval.hpp"
#include "mcd/image.hpp"

namespace mcd {

// AS-OCT-like scene: a bright elliptical band (anterior segment) enclosing a
// dark chamber, cells as small smooth blobs, speckle as 1-3 pixel spikes.
// Cell and speckle intensities are placed relative to the rendered scene's
// Otsu threshold so the detection behaviors under lambda are controlled:
// bright cells clear the threshold, dim cells sit just below it but above
// 0.9x it. Defaults are tuned so that every planted cell is proposed at
// lambda = 0.9.
struct SynthConfig {
  int width = 800;   // half-scale of the 1598x1465 clinical frames
  int height = 730;

  int cell_count_min = 0;
  int cell_count_max = 10;
  double cell_sigma_min = 0.7;   // Gaussian profile radius, px
  double cell_sigma_max = 1.3;
  double bright_cell_gain_min = 1.7;  // peak intensity as multiple of the
  double bright_cell_gain_max = 2.3;  // scene Otsu threshold
  double dim_cell_gain_min = 0.93;
  double dim_cell_gain_max = 0.96;
  double dim_cell_fraction = 0.25;
  double cell_min_separation = 16.0;  // px between cell centers

  double speckle_density_inside = 2.0e-4;   // expected spikes per chamber px
  double speckle_density_outside = 0.6e-4;  // per non-chamber px
  double speckle_gain_min = 0.85;
  double speckle_gain_max = 2.4;
  double cell_noise_clearance = 12.0;  // Chebyshev px, spikes suppressed near cells

  int background_level = 14;
  int background_noise = 6;  // +/- uniform
  int chamber_level = 8;
  int chamber_noise = 4;
  int band_level = 170;
  int band_noise = 12;

  double chamber_axis_x = 0.30;   // semi-axes as fractions of W / H
  double chamber_axis_y = 0.23;
  double chamber_center_y = 0.46; // fraction of H; x is centered
  double band_thickness = 0.45;   // band spans normalized radius [1, 1+t]

  int box_w = 10;
  int box_h = 10;
  std::uint64_t seed = 1;
};

struct PlantedCell {
  double cx = 0.0, cy = 0.0;
  int peak = 0;
  double sigma = 0.0;
  int core_area = 0;  // pixels at or above half the peak
  bool dim = false;
};

struct SynthSample {
  std::string id;
  GrayImage image;
  BinaryMask ac_mask_gt;
  BinaryMask segment_mask_gt;
  GroundTruthAnnotation cells_gt;
  std::vector<std::pair<int, int>> noise_points;
  std::vector<PlantedCell> cells;
};

SynthSample generate_sample(const SynthConfig& cfg, int index);
std::vector<SynthSample> generate(const SynthConfig& cfg, int n);

// Writes images/, masks_ac/, masks_segment/, annotations/ and manifest.json
// under dir (created if needed).
void write_corpus(const std::vector<SynthSample>& samples, const SynthConfig& cfg,
                  const std::string& dir);

// Key=value round-trip of the generator settings (used by manifest.json and
// the CLI config plumbing).
std::string synth_config_to_json(const SynthConfig& cfg);

}  // namespace mcd

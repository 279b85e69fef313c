#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mcd/image.hpp"

namespace mcd {

struct PromptPoint {
  int x = 0;
  int y = 0;
  bool operator==(const PromptPoint& o) const { return x == o.x && y == o.y; }
};

struct I2ACPConfig {
  // Second-largest/largest area ratio above which the two components merge.
  double merge_ratio = 0.65;
  // (dw, dh) pairs, both expressed as fractions of the image width.
  std::vector<std::pair<double, double>> offsets = {{0.0, 0.1}, {0.0, -0.1}};
  Connectivity connectivity = Connectivity::Eight;
};

// Stand-in for the pluggable segmentation backend. external-mask loads a
// precomputed mask (how a foundation-model deployment plugs in);
// flood-fill-fallback is the built-in classical segmenter.
struct SegmenterSpec {
  enum class Kind { ExternalMask, FloodFillFallback };
  Kind kind = Kind::FloodFillFallback;
  // ExternalMask parameters: either "path", or "template" (with {stem}) plus "stem".
  std::map<std::string, std::string> parameters;

  static SegmenterSpec fallback() { return SegmenterSpec{Kind::FloodFillFallback, {}}; }
  static SegmenterSpec external(const std::string& path_template, const std::string& stem) {
    SegmenterSpec s;
    s.kind = Kind::ExternalMask;
    s.parameters["template"] = path_template;
    s.parameters["stem"] = stem;
    return s;
  }
};

std::string resolve_mask_path(const std::string& path_template, const std::string& stem);

// Mean-threshold binarization, keep the largest component, merging in the
// second-largest when area2/area1 exceeds the merge ratio.
BinaryMask anterior_segment_mask(const GrayImage& g, const I2ACPConfig& cfg);

// Centroid of the segment mask plus the configured offsets (scaled by the
// image width), snapped to the pixel grid and clamped into the image.
std::vector<PromptPoint> prompt_points(const BinaryMask& segment_mask, const I2ACPConfig& cfg);

BinaryMask segment_ac(const GrayImage& g, const std::vector<PromptPoint>& prompts,
                      const SegmenterSpec& spec);

// Full Field-of-Focus composition: returns the AC mask.
BinaryMask field_of_focus(const GrayImage& g, const I2ACPConfig& cfg, const SegmenterSpec& spec);

}  // namespace mcd

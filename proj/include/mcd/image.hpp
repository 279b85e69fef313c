#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

namespace mcd {

enum class Connectivity { Four = 4, Eight = 8 };

// Rounding used whenever a real coordinate is snapped to the pixel grid.
inline int round_half_away(double v) { return static_cast<int>(std::lround(v)); }

// Interleaved 8-bit raster straight from a decoder; 1 or 3 channels are the
// supported inputs for grayscale conversion.
struct Raster {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> data;
};

struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major

  static GrayImage filled(int w, int h, std::uint8_t value) {
    return GrayImage{w, h, std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h, value)};
  }
  std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  bool in_bounds(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
  std::size_t pixel_count() const { return pixels.size(); }
};

struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;  // 0 or 1, row-major

  static BinaryMask filled(int w, int h, bool value) {
    return BinaryMask{w, h, std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h, value ? 1 : 0)};
  }
  bool get(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x] != 0; }
  void set(int x, int y, bool v) { bits[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }
  bool in_bounds(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
  std::size_t count_true() const {
    std::size_t n = 0;
    for (auto b : bits) n += b != 0;
    return n;
  }
  bool same_shape(const BinaryMask& o) const { return width == o.width && height == o.height; }
};

struct Point2d {
  double x = 0.0;
  double y = 0.0;
};

// Labels are assigned 1..component_count in raster-scan discovery order;
// 0 is background. areas/centroids are indexed by label-1.
struct ComponentLabeling {
  std::vector<std::int32_t> labels;
  int component_count = 0;
  std::vector<std::int64_t> areas;
  std::vector<Point2d> centroids;
};

struct Histogram256 {
  std::array<std::uint64_t, 256> counts{};
  std::uint64_t total = 0;
};

GrayImage to_gray(const Raster& image);
BinaryMask mean_threshold_mask(const GrayImage& g);
ComponentLabeling connected_components(const BinaryMask& m, Connectivity connectivity);
Histogram256 histogram(const GrayImage& g);
BinaryMask mask_and(const BinaryMask& a, const BinaryMask& b);

// Centroid of all true pixels; throws ComputeError on an empty mask.
Point2d mask_centroid(const BinaryMask& m);

// 3x3 morphology; out-of-bounds neighbors are ignored so that closing never
// shrinks a region that touches the border.
BinaryMask dilate3x3(const BinaryMask& m);
BinaryMask erode3x3(const BinaryMask& m);
BinaryMask close3x3(const BinaryMask& m);

}  // namespace mcd

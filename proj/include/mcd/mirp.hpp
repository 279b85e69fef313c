#pragma once

#include <vector>

#include "mcd/image.hpp"

namespace mcd {

struct MirpConfig {
  double lambda = 1.0;  // threshold adjustment factor, (0, 1.5]
  int s_min = 1;        // component area bounds, inclusive
  int s_max = 25;
  int box_w = 10;
  int box_h = 10;
  // Component restriction to the AC mask: by default a component is kept when
  // its centroid pixel lies inside the mask. clip_to_mask instead intersects
  // the bright mask with the AC mask before labeling, which can split border
  // components below s_min.
  bool clip_to_mask = false;
  Connectivity connectivity = Connectivity::Eight;
};

// Half-open box: width == x_br - x_tl, height == y_br - y_tl.
struct CandidateBox {
  int x_tl = 0, y_tl = 0, x_br = 0, y_br = 0;
  Point2d source_centroid{};
  std::int64_t source_area = 0;  // emitting component's pixel count, 0 if n/a

  bool operator==(const CandidateBox& o) const {
    return x_tl == o.x_tl && y_tl == o.y_tl && x_br == o.x_br && y_br == o.y_br;
  }
  int width() const { return x_br - x_tl; }
  int height() const { return y_br - y_tl; }
  // Geometric containment with the boundary included.
  bool contains_point(int px, int py) const {
    return px >= x_tl && px <= x_br && py >= y_tl && py <= y_br;
  }
};

// Between-class-variance scan over all 256 levels; first maximizer wins.
int otsu_threshold(const Histogram256& h);

// T_init * lambda, kept as a real value; bright-pixel comparison is strict >.
double effective_threshold(int t_init, double lambda);

BinaryMask bright_mask(const GrayImage& g, double t_opt);

// w x h box centered on a real centroid, snapped with round-half-away and
// clamped into the image by translation so the size is preserved.
CandidateBox box_at_centroid(double cx, double cy, int w, int h, int img_w, int img_h);
CandidateBox box_at_point(int px, int py, int w, int h, int img_w, int img_h);

// Candidate generation from an explicit threshold; shared by the lambda
// pipeline and the plain Otsu/Isodata baselines.
std::vector<CandidateBox> propose_with_threshold(const GrayImage& g, const BinaryMask& ac_mask,
                                                 double t_opt, const MirpConfig& cfg);

std::vector<CandidateBox> propose(const GrayImage& g, const BinaryMask& ac_mask,
                                  const MirpConfig& cfg);

}  // namespace mcd

#pragma once

#include <vector>

#include "mcd/image.hpp"
#include "mcd/mirp.hpp"

namespace mcd {

struct BaselineConfig {
  enum class Method { Otsu, Isodata };
  Method method = Method::Otsu;
  int s_min = 1;
  int s_max = 25;
  int box_w = 10;
  int box_h = 10;
  Connectivity connectivity = Connectivity::Eight;
};

// Ridler-Calvard iteration: T <- round((mean below-or-at T + mean above T)/2)
// from the rounded global mean, class means kept as exact rationals until the
// final rounding. Throws ComputeError on a single-intensity histogram.
int isodata_threshold(const Histogram256& h);

// Global threshold (strict >), components restricted to the AC, area filter,
// fixed-size boxes at centroids. Shares the MiRP proposal machinery.
std::vector<CandidateBox> detect_threshold(const GrayImage& g, const BinaryMask& ac_mask,
                                           const BaselineConfig& cfg);

}  // namespace mcd

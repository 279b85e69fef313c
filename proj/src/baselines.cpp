#include "mcd/baselines.hpp"

#include <algorithm>

#include "mcd/errors.hpp"
#include "mcd/log.hpp"

namespace mcd {

namespace {

using i128 = __int128;

// round(n/d) half away from zero; n, d > 0 here.
int rounded_ratio(i128 n, i128 d) { return static_cast<int>((2 * n + d) / (2 * d)); }

}  // namespace

int isodata_threshold(const Histogram256& h) {
  if (h.total == 0) throw DataError("isodata_threshold: empty histogram");
  int lo = -1, hi = -1;
  i128 sum = 0;
  for (int v = 0; v < 256; ++v) {
    if (h.counts[v] == 0) continue;
    if (lo < 0) lo = v;
    hi = v;
    sum += static_cast<i128>(h.counts[v]) * v;
  }
  if (lo == hi) throw ComputeError("isodata_threshold: degenerate histogram");

  // Keep T in [lo, hi-1] so both classes stay nonempty.
  const auto clamp_t = [&](int t) { return std::clamp(t, lo, hi - 1); };
  int t = clamp_t(rounded_ratio(sum, static_cast<i128>(h.total)));

  for (int iter = 0; iter < 256; ++iter) {
    i128 s_low = 0, c_low = 0;
    for (int v = 0; v <= t; ++v) {
      s_low += static_cast<i128>(h.counts[v]) * v;
      c_low += h.counts[v];
    }
    const i128 s_high = sum - s_low;
    const i128 c_high = static_cast<i128>(h.total) - c_low;
    // mean_low/2 + mean_high/2 == (s_l*c_h + s_h*c_l) / (2*c_l*c_h)
    const int next = clamp_t(rounded_ratio(s_low * c_high + s_high * c_low, 2 * c_low * c_high));
    if (next == t) return t;
    t = next;
  }
  log_warn("isodata_threshold: no fixed point after 256 iterations");
  return t;
}

std::vector<CandidateBox> detect_threshold(const GrayImage& g, const BinaryMask& ac_mask,
                                           const BaselineConfig& cfg) {
  if (!(1 <= cfg.s_min && cfg.s_min <= cfg.s_max)) {
    throw DataError("BaselineConfig: need 1 <= s_min <= s_max");
  }
  const Histogram256 h = histogram(g);
  int threshold = 0;
  if (cfg.method == BaselineConfig::Method::Otsu) {
    threshold = otsu_threshold(h);
  } else {
    try {
      threshold = isodata_threshold(h);
    } catch (const ComputeError& e) {
      log_warn(std::string("detect_threshold: ") + e.what() + "; returning no detections");
      return {};
    }
  }
  MirpConfig mcfg;
  mcfg.lambda = 1.0;
  mcfg.s_min = cfg.s_min;
  mcfg.s_max = cfg.s_max;
  mcfg.box_w = cfg.box_w;
  mcfg.box_h = cfg.box_h;
  mcfg.connectivity = cfg.connectivity;
  return propose_with_threshold(g, ac_mask, static_cast<double>(threshold), mcfg);
}

}  // namespace mcd

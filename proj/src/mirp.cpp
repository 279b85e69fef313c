#include "mcd/mirp.hpp"

#include <algorithm>
#include <string>

#include "mcd/errors.hpp"

namespace mcd {

namespace {

void validate(const MirpConfig& cfg) {
  if (!(cfg.lambda > 0.0 && cfg.lambda <= 1.5)) throw DataError("MirpConfig: lambda out of (0, 1.5]");
  if (!(1 <= cfg.s_min && cfg.s_min <= cfg.s_max)) throw DataError("MirpConfig: need 1 <= s_min <= s_max");
  if (cfg.box_w < 1 || cfg.box_h < 1) throw DataError("MirpConfig: box dimensions must be >= 1");
}

}  // namespace

int otsu_threshold(const Histogram256& h) {
  if (h.total == 0) throw DataError("otsu_threshold: empty histogram");
  const double total = static_cast<double>(h.total);
  double prob[256];
  for (int v = 0; v < 256; ++v) prob[v] = static_cast<double>(h.counts[v]) / total;

  // Cumulative class probability and cumulative intensity-weighted mass.
  double omega_cum = 0.0, mu_cum = 0.0;
  double mu_t = 0.0;
  for (int v = 0; v < 256; ++v) mu_t += v * prob[v];

  int t_init = 0;
  double sigma_max = 0.0;
  std::uint64_t count_cum = 0;  // exact class-nonempty guard
  for (int k = 0; k < 256; ++k) {
    omega_cum += prob[k];
    mu_cum += k * prob[k];
    count_cum += h.counts[k];
    if (count_cum == 0 || count_cum == h.total) continue;
    const double w1 = omega_cum;
    const double w2 = 1.0 - w1;
    const double mu1 = mu_cum / w1;
    const double mu2 = (mu_t - mu_cum) / w2;
    const double diff = mu1 - mu2;
    const double sigma = w1 * w2 * diff * diff;
    if (sigma > sigma_max) {
      t_init = k;
      sigma_max = sigma;
    }
  }
  return t_init;
}

double effective_threshold(int t_init, double lambda) { return t_init * lambda; }

BinaryMask bright_mask(const GrayImage& g, double t_opt) {
  BinaryMask out = BinaryMask::filled(g.width, g.height, false);
  for (std::size_t i = 0; i < g.pixels.size(); ++i) {
    out.bits[i] = (static_cast<double>(g.pixels[i]) > t_opt) ? 1 : 0;
  }
  return out;
}

CandidateBox box_at_centroid(double cx, double cy, int w, int h, int img_w, int img_h) {
  CandidateBox box;
  box.source_centroid = Point2d{cx, cy};
  box.x_tl = round_half_away(cx - w / 2.0);
  box.y_tl = round_half_away(cy - h / 2.0);
  box.x_br = box.x_tl + w;
  box.y_br = box.y_tl + h;
  // Translate inward; size is preserved whenever the image can hold the box.
  if (box.x_tl < 0) {
    box.x_tl = 0;
    box.x_br = std::min(w, img_w);
  } else if (box.x_br > img_w) {
    box.x_br = img_w;
    box.x_tl = std::max(0, img_w - w);
  }
  if (box.y_tl < 0) {
    box.y_tl = 0;
    box.y_br = std::min(h, img_h);
  } else if (box.y_br > img_h) {
    box.y_br = img_h;
    box.y_tl = std::max(0, img_h - h);
  }
  return box;
}

CandidateBox box_at_point(int px, int py, int w, int h, int img_w, int img_h) {
  return box_at_centroid(static_cast<double>(px), static_cast<double>(py), w, h, img_w, img_h);
}

std::vector<CandidateBox> propose_with_threshold(const GrayImage& g, const BinaryMask& ac_mask,
                                                 double t_opt, const MirpConfig& cfg) {
  validate(cfg);
  if (g.width != ac_mask.width || g.height != ac_mask.height) {
    throw DataError("propose: image/mask dimension mismatch");
  }
  BinaryMask bright = bright_mask(g, t_opt);
  if (cfg.clip_to_mask) bright = mask_and(bright, ac_mask);
  const ComponentLabeling comps = connected_components(bright, cfg.connectivity);

  std::vector<CandidateBox> out;
  for (int k = 0; k < comps.component_count; ++k) {
    if (!cfg.clip_to_mask) {
      const int px = round_half_away(comps.centroids[k].x);
      const int py = round_half_away(comps.centroids[k].y);
      if (!ac_mask.get(px, py)) continue;
    }
    const std::int64_t area = comps.areas[k];
    if (area < cfg.s_min || area > cfg.s_max) continue;
    CandidateBox box = box_at_centroid(comps.centroids[k].x, comps.centroids[k].y, cfg.box_w,
                                       cfg.box_h, g.width, g.height);
    box.source_area = area;
    out.push_back(box);
  }
  return out;
}

std::vector<CandidateBox> propose(const GrayImage& g, const BinaryMask& ac_mask,
                                  const MirpConfig& cfg) {
  validate(cfg);
  const int t_init = otsu_threshold(histogram(g));
  return propose_with_threshold(g, ac_mask, effective_threshold(t_init, cfg.lambda), cfg);
}

}  // namespace mcd

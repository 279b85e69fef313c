#include "mcd/fof.hpp"

#include <algorithm>
#include <vector>

#include "mcd/errors.hpp"
#include "mcd/image_io.hpp"
#include "mcd/log.hpp"

namespace mcd {

std::string resolve_mask_path(const std::string& path_template, const std::string& stem) {
  std::string out = path_template;
  const std::string token = "{stem}";
  for (std::size_t pos = out.find(token); pos != std::string::npos; pos = out.find(token, pos)) {
    out.replace(pos, token.size(), stem);
    pos += stem.size();
  }
  return out;
}

BinaryMask anterior_segment_mask(const GrayImage& g, const I2ACPConfig& cfg) {
  const BinaryMask fg = mean_threshold_mask(g);
  const ComponentLabeling comps = connected_components(fg, cfg.connectivity);
  if (comps.component_count == 0) throw ComputeError("no anterior segment found");

  // Largest and second-largest; area ties resolve to the earlier label.
  int largest = 0, second = -1;
  for (int k = 1; k < comps.component_count; ++k) {
    if (comps.areas[k] > comps.areas[largest]) {
      second = largest;
      largest = k;
    } else if (second < 0 || comps.areas[k] > comps.areas[second]) {
      second = k;
    }
  }
  const bool merge = second >= 0 && static_cast<double>(comps.areas[second]) /
                                            static_cast<double>(comps.areas[largest]) >
                                        cfg.merge_ratio;

  BinaryMask out = BinaryMask::filled(g.width, g.height, false);
  for (std::size_t i = 0; i < out.bits.size(); ++i) {
    const std::int32_t label = comps.labels[i];
    if (label == largest + 1 || (merge && label == second + 1)) out.bits[i] = 1;
  }
  return out;
}

std::vector<PromptPoint> prompt_points(const BinaryMask& segment_mask, const I2ACPConfig& cfg) {
  if (segment_mask.count_true() == 0) throw ComputeError("prompt_points: empty segment mask");
  if (cfg.offsets.empty()) throw DataError("I2ACPConfig: offsets must be nonempty");
  const Point2d c = mask_centroid(segment_mask);
  const double w = segment_mask.width;
  std::vector<PromptPoint> out;
  out.reserve(cfg.offsets.size());
  for (const auto& [dw, dh] : cfg.offsets) {
    int x = round_half_away(c.x + dw * w);
    int y = round_half_away(c.y + dh * w);
    x = std::clamp(x, 0, segment_mask.width - 1);
    y = std::clamp(y, 0, segment_mask.height - 1);
    out.push_back(PromptPoint{x, y});
  }
  return out;
}

namespace {

BinaryMask flood_fill_fallback(const GrayImage& g, const std::vector<PromptPoint>& prompts) {
  const std::uint64_t n = g.pixel_count();
  std::uint64_t sum = 0;
  for (auto p : g.pixels) sum += p;

  const auto below_mean = [&](int x, int y) {
    return static_cast<std::uint64_t>(g.at(x, y)) * n < sum;
  };

  BinaryMask region = BinaryMask::filled(g.width, g.height, false);
  std::vector<std::int32_t> queue;
  int seeded = 0;
  for (const auto& p : prompts) {
    if (!g.in_bounds(p.x, p.y)) throw DataError("segment_ac: prompt outside image");
    if (!below_mean(p.x, p.y)) continue;  // seed on a bright pixel is skipped
    ++seeded;
    if (!region.get(p.x, p.y)) {
      region.set(p.x, p.y, true);
      queue.push_back(p.y * g.width + p.x);
    }
  }
  if (seeded == 0) throw ComputeError("prompts outside dark region");

  static constexpr int dx[8] = {-1, 0, 1, -1, 1, -1, 0, 1};
  static constexpr int dy[8] = {-1, -1, -1, 0, 0, 1, 1, 1};
  for (std::size_t head = 0; head < queue.size(); ++head) {
    const int cx = queue[head] % g.width, cy = queue[head] / g.width;
    for (int d = 0; d < 8; ++d) {
      const int nx = cx + dx[d], ny = cy + dy[d];
      if (!g.in_bounds(nx, ny) || region.get(nx, ny) || !below_mean(nx, ny)) continue;
      region.set(nx, ny, true);
      queue.push_back(ny * g.width + nx);
    }
  }
  return close3x3(region);
}

}  // namespace

BinaryMask segment_ac(const GrayImage& g, const std::vector<PromptPoint>& prompts,
                      const SegmenterSpec& spec) {
  if (prompts.empty()) throw DataError("segment_ac: no prompts");
  switch (spec.kind) {
    case SegmenterSpec::Kind::ExternalMask: {
      std::string path;
      if (auto it = spec.parameters.find("path"); it != spec.parameters.end()) {
        path = it->second;
      } else {
        const auto tmpl = spec.parameters.find("template");
        const auto stem = spec.parameters.find("stem");
        if (tmpl == spec.parameters.end() || stem == spec.parameters.end()) {
          throw DataError("external-mask segmenter needs 'path' or 'template'+'stem'");
        }
        path = resolve_mask_path(tmpl->second, stem->second);
      }
      BinaryMask m = load_mask_png(path);
      if (m.width != g.width || m.height != g.height) {
        throw DataError("external mask " + path + " does not match image dimensions");
      }
      return m;
    }
    case SegmenterSpec::Kind::FloodFillFallback:
      return flood_fill_fallback(g, prompts);
  }
  throw DataError("segment_ac: unrecognized segmenter kind");
}

BinaryMask field_of_focus(const GrayImage& g, const I2ACPConfig& cfg, const SegmenterSpec& spec) {
  const BinaryMask segment = anterior_segment_mask(g, cfg);
  const std::vector<PromptPoint> prompts = prompt_points(segment, cfg);
  return segment_ac(g, prompts, spec);
}

}  // namespace mcd

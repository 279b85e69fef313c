#include "mcd/image.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "mcd/errors.hpp"

namespace mcd {

GrayImage to_gray(const Raster& image) {
  if (image.width < 1 || image.height < 1) throw DataError("to_gray: empty image");
  const std::size_t n = static_cast<std::size_t>(image.width) * image.height;
  GrayImage out{image.width, image.height, {}};
  out.pixels.resize(n);
  if (image.channels == 1) {
    out.pixels = image.data;
    return out;
  }
  if (image.channels == 3) {
    for (std::size_t i = 0; i < n; ++i) {
      const double r = image.data[3 * i + 0];
      const double g = image.data[3 * i + 1];
      const double b = image.data[3 * i + 2];
      out.pixels[i] = static_cast<std::uint8_t>(std::lround(0.299 * r + 0.587 * g + 0.114 * b));
    }
    return out;
  }
  throw DataError("to_gray: unsupported channel count " + std::to_string(image.channels) +
                  " (expected 1 or 3)");
}

BinaryMask mean_threshold_mask(const GrayImage& g) {
  BinaryMask out = BinaryMask::filled(g.width, g.height, false);
  const std::uint64_t n = g.pixel_count();
  std::uint64_t sum = 0;
  for (auto p : g.pixels) sum += p;
  // p > sum/n without rounding: compare p*n > sum in integers.
  for (std::size_t i = 0; i < g.pixels.size(); ++i) {
    out.bits[i] = (static_cast<std::uint64_t>(g.pixels[i]) * n > sum) ? 1 : 0;
  }
  return out;
}

ComponentLabeling connected_components(const BinaryMask& m, Connectivity connectivity) {
  ComponentLabeling out;
  out.labels.assign(m.bits.size(), 0);
  const int w = m.width, h = m.height;

  static constexpr int dx8[8] = {-1, 0, 1, -1, 1, -1, 0, 1};
  static constexpr int dy8[8] = {-1, -1, -1, 0, 0, 1, 1, 1};
  static constexpr int dx4[4] = {0, -1, 1, 0};
  static constexpr int dy4[4] = {-1, 0, 0, 1};
  const int* dx = connectivity == Connectivity::Eight ? dx8 : dx4;
  const int* dy = connectivity == Connectivity::Eight ? dy8 : dy4;
  const int ndirs = connectivity == Connectivity::Eight ? 8 : 4;

  std::vector<std::int32_t> queue;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t idx = static_cast<std::size_t>(y) * w + x;
      if (m.bits[idx] == 0 || out.labels[idx] != 0) continue;
      const std::int32_t label = ++out.component_count;
      std::int64_t area = 0;
      std::int64_t sx = 0, sy = 0;
      queue.clear();
      queue.push_back(static_cast<std::int32_t>(idx));
      out.labels[idx] = label;
      for (std::size_t head = 0; head < queue.size(); ++head) {
        const std::int32_t cur = queue[head];
        const int cx = cur % w, cy = cur / w;
        ++area;
        sx += cx;
        sy += cy;
        for (int d = 0; d < ndirs; ++d) {
          const int nx = cx + dx[d], ny = cy + dy[d];
          if (nx < 0 || nx >= w || ny < 0 || ny >= h) continue;
          const std::size_t nidx = static_cast<std::size_t>(ny) * w + nx;
          if (m.bits[nidx] != 0 && out.labels[nidx] == 0) {
            out.labels[nidx] = label;
            queue.push_back(static_cast<std::int32_t>(nidx));
          }
        }
      }
      out.areas.push_back(area);
      out.centroids.push_back(Point2d{static_cast<double>(sx) / area, static_cast<double>(sy) / area});
    }
  }
  return out;
}

Histogram256 histogram(const GrayImage& g) {
  Histogram256 h;
  for (auto p : g.pixels) ++h.counts[p];
  h.total = g.pixel_count();
  return h;
}

BinaryMask mask_and(const BinaryMask& a, const BinaryMask& b) {
  if (!a.same_shape(b)) throw DataError("mask_and: dimension mismatch");
  BinaryMask out = a;
  for (std::size_t i = 0; i < out.bits.size(); ++i) out.bits[i] = a.bits[i] & b.bits[i];
  return out;
}

Point2d mask_centroid(const BinaryMask& m) {
  std::int64_t sx = 0, sy = 0, n = 0;
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      if (m.bits[static_cast<std::size_t>(y) * m.width + x]) {
        sx += x;
        sy += y;
        ++n;
      }
    }
  }
  if (n == 0) throw ComputeError("mask_centroid: empty mask");
  return Point2d{static_cast<double>(sx) / n, static_cast<double>(sy) / n};
}

BinaryMask dilate3x3(const BinaryMask& m) {
  BinaryMask out = BinaryMask::filled(m.width, m.height, false);
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      bool any = false;
      for (int dy = -1; dy <= 1 && !any; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int nx = x + dx, ny = y + dy;
          if (m.in_bounds(nx, ny) && m.get(nx, ny)) {
            any = true;
            break;
          }
        }
      }
      if (any) out.set(x, y, true);
    }
  }
  return out;
}

BinaryMask erode3x3(const BinaryMask& m) {
  BinaryMask out = BinaryMask::filled(m.width, m.height, false);
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      bool all = true;
      for (int dy = -1; dy <= 1 && all; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int nx = x + dx, ny = y + dy;
          if (m.in_bounds(nx, ny) && !m.get(nx, ny)) {
            all = false;
            break;
          }
        }
      }
      if (all) out.set(x, y, true);
    }
  }
  return out;
}

BinaryMask close3x3(const BinaryMask& m) { return erode3x3(dilate3x3(m)); }

}  // namespace mcd

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mcd/baselines.hpp"
#include "mcd/errors.hpp"
#include "mcd/rng.hpp"

using namespace mcd;

namespace {

Histogram256 random_histogram(Rng& rng, int min_distinct = 2) {
  Histogram256 h;
  for (;;) {
    h = Histogram256{};
    const int populated = 2 + static_cast<int>(rng.below(60));
    for (int i = 0; i < populated; ++i) h.counts[rng.below(256)] += 1 + rng.below(500);
    int distinct = 0;
    h.total = 0;
    for (auto c : h.counts) {
      h.total += c;
      distinct += c > 0;
    }
    if (distinct >= min_distinct) return h;
  }
}

GrayImage random_image(Rng& rng, int w, int h) {
  GrayImage g = GrayImage::filled(w, h, 0);
  for (auto& p : g.pixels) p = static_cast<std::uint8_t>(rng.below(256));
  return g;
}

// Recomputes the isodata update at t with exact integer arithmetic.
int isodata_step(const Histogram256& h, int t) {
  __int128 s_low = 0, c_low = 0, s_high = 0, c_high = 0;
  for (int v = 0; v < 256; ++v) {
    if (v <= t) {
      s_low += static_cast<__int128>(h.counts[v]) * v;
      c_low += h.counts[v];
    } else {
      s_high += static_cast<__int128>(h.counts[v]) * v;
      c_high += h.counts[v];
    }
  }
  const __int128 num = s_low * c_high + s_high * c_low;
  const __int128 den = 2 * c_low * c_high;
  return static_cast<int>((2 * num + den) / (2 * den));
}

}  // namespace

TEST_CASE("isodata_threshold: two-level histogram converges to the midpoint") {
  Histogram256 h;
  h.counts[40] = 50;
  h.counts[160] = 50;
  h.total = 100;
  CHECK(isodata_threshold(h) == 100);
}

TEST_CASE("isodata_threshold: a fixed-point start returns immediately") {
  // Global mean already at the fixed point: mean 100 -> classes {40},{160} ->
  // next = 100 again.
  Histogram256 h;
  h.counts[40] = 50;
  h.counts[160] = 50;
  h.total = 100;
  const int t = isodata_threshold(h);
  CHECK(t == 100);
  CHECK(isodata_step(h, t) == t);
}

TEST_CASE("isodata_threshold: degenerate single-intensity histogram rejected") {
  Histogram256 h;
  h.counts[99] = 1234;
  h.total = 1234;
  CHECK_THROWS_AS(isodata_threshold(h), ComputeError);
  CHECK_THROWS_AS(isodata_threshold(Histogram256{}), DataError);
}

TEST_CASE("isodata_threshold: returned level is a fixed point of the class-mean update") {
  Rng rng(31);
  for (int it = 0; it < 400; ++it) {
    const Histogram256 h = random_histogram(rng);
    const int t = isodata_threshold(h);
    std::uint64_t low = 0, high = 0;
    for (int v = 0; v < 256; ++v) (v <= t ? low : high) += h.counts[v];
    CHECK(low > 0);
    CHECK(high > 0);
    int lo = 255, hi = 0;
    for (int v = 0; v < 256; ++v) {
      if (h.counts[v]) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
    const int next = std::clamp(isodata_step(h, t), lo, hi - 1);
    CHECK(next == t);
  }
}

TEST_CASE("detect_threshold: size filter separates speckle from blob") {
  GrayImage g = GrayImage::filled(60, 40, 10);
  g.at(5, 5) = 220;                                    // 1-pixel speckle
  for (int i = 0; i < 3; ++i) g.at(30 + i, 20) = 220;  // 3-pixel blob
  const BinaryMask ac = BinaryMask::filled(60, 40, true);

  BaselineConfig cfg;
  cfg.method = BaselineConfig::Method::Otsu;
  cfg.s_min = 2;
  auto boxes = detect_threshold(g, ac, cfg);
  REQUIRE(boxes.size() == 1);
  CHECK(boxes[0].source_area == 3);

  cfg.s_min = 1;
  boxes = detect_threshold(g, ac, cfg);
  CHECK(boxes.size() == 2);
}

TEST_CASE("detect_threshold: components above s_max are removed") {
  GrayImage g = GrayImage::filled(60, 40, 10);
  for (int y = 12; y < 17; ++y)
    for (int x = 10; x < 16; ++x) g.at(x, y) = 220;  // 30 px
  BaselineConfig cfg;                                // s_max 25
  CHECK(detect_threshold(g, BinaryMask::filled(60, 40, true), cfg).empty());
}

TEST_CASE("detect_threshold: isodata on a constant image warns and returns nothing") {
  BaselineConfig cfg;
  cfg.method = BaselineConfig::Method::Isodata;
  CHECK(detect_threshold(GrayImage::filled(32, 32, 77), BinaryMask::filled(32, 32, true), cfg)
            .empty());
}

TEST_CASE("detect_threshold: Otsu baseline equals MiRP at lambda 1 box for box") {
  Rng rng(55);
  for (int it = 0; it < 30; ++it) {
    const GrayImage g = random_image(rng, 48, 36);
    BinaryMask ac = BinaryMask::filled(48, 36, false);
    for (int y = 6; y < 30; ++y)
      for (int x = 8; x < 40; ++x) ac.set(x, y, true);

    BaselineConfig bcfg;
    MirpConfig mcfg;
    mcfg.lambda = 1.0;
    const auto baseline = detect_threshold(g, ac, bcfg);
    const auto mirp = propose(g, ac, mcfg);
    REQUIRE(baseline.size() == mirp.size());
    for (std::size_t i = 0; i < baseline.size(); ++i) {
      CHECK(baseline[i] == mirp[i]);
      CHECK(baseline[i].source_area == mirp[i].source_area);
    }
  }
}

TEST_CASE("detect_threshold: detection count non-increasing in s_min; centroids inside AC") {
  Rng rng(56);
  for (int it = 0; it < 20; ++it) {
    const GrayImage g = random_image(rng, 40, 40);
    BinaryMask ac = BinaryMask::filled(40, 40, false);
    for (int y = 4; y < 36; ++y)
      for (int x = 4; x < 36; ++x) ac.set(x, y, true);
    std::size_t prev = SIZE_MAX;
    for (int s_min = 1; s_min <= 5; ++s_min) {
      BaselineConfig cfg;
      cfg.s_min = s_min;
      const auto boxes = detect_threshold(g, ac, cfg);
      CHECK(boxes.size() <= prev);
      prev = boxes.size();
      for (const auto& b : boxes) {
        const int px = round_half_away(b.source_centroid.x);
        const int py = round_half_away(b.source_centroid.y);
        CHECK(ac.get(px, py));
      }
    }
  }
}

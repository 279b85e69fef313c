#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mcd/errors.hpp"
#include "mcd/image.hpp"
#include "mcd/mirp.hpp"
#include "mcd/rng.hpp"
#include "oracles.hpp"

using namespace mcd;

namespace {

Histogram256 random_histogram(Rng& rng) {
  Histogram256 h;
  const int populated = 2 + static_cast<int>(rng.below(254));
  for (int i = 0; i < populated; ++i) {
    const int v = static_cast<int>(rng.below(256));
    h.counts[v] += rng.below(100);
  }
  h.total = 0;
  for (auto c : h.counts) h.total += c;
  if (h.total == 0) {
    h.counts[17] = 3;
    h.total = 3;
  }
  return h;
}

GrayImage random_image(Rng& rng, int w, int h) {
  GrayImage g = GrayImage::filled(w, h, 0);
  for (auto& p : g.pixels) p = static_cast<std::uint8_t>(rng.below(256));
  return g;
}

// Plants an n-pixel horizontal run of the given intensity.
void plant_run(GrayImage& g, int x, int y, int n, std::uint8_t v) {
  for (int i = 0; i < n; ++i) g.at(x + i, y) = v;
}

}  // namespace

TEST_CASE("otsu_threshold: bimodal histogram returns the first maximizer") {
  Histogram256 h;
  h.counts[10] = 50;
  h.counts[200] = 50;
  h.total = 100;
  CHECK(otsu_threshold(h) == 10);
  CHECK(oracle::brute_force_otsu(h) == 10);
}

TEST_CASE("otsu_threshold: constant histogram returns 0") {
  Histogram256 h;
  h.counts[137] = 64;
  h.total = 64;
  CHECK(otsu_threshold(h) == 0);
}

TEST_CASE("otsu_threshold: matches the brute-force oracle on random histograms") {
  Rng rng(123);
  for (int it = 0; it < 300; ++it) {
    const Histogram256 h = random_histogram(rng);
    CHECK(otsu_threshold(h) == oracle::brute_force_otsu(h));
  }
}

TEST_CASE("effective_threshold: exact product, strict comparison downstream") {
  CHECK(effective_threshold(100, 1.0) == 100.0);
  CHECK(effective_threshold(100, 0.85) == 85.0);
  const double t = effective_threshold(128, 0.7);
  CHECK(t == doctest::Approx(89.6).epsilon(1e-12));
  GrayImage g{2, 1, {90, 89}};
  const BinaryMask m = bright_mask(g, t);
  CHECK(m.get(0, 0));
  CHECK(!m.get(1, 0));
}

TEST_CASE("box_at_centroid: size preserved, rounding half away, translation clamp") {
  CandidateBox b = box_at_centroid(5.0, 5.0, 10, 10, 100, 100);
  CHECK(b.x_tl == 0);
  CHECK(b.x_br == 10);
  CHECK(b.width() == 10);
  CHECK(b.height() == 10);

  b = box_at_centroid(49.5, 7.0, 10, 10, 100, 100);
  CHECK(b.x_tl == 45);  // 44.5 rounds away from zero
  CHECK(b.x_br == 55);

  b = box_at_centroid(1.0, 1.0, 10, 10, 100, 100);  // would start negative
  CHECK(b.x_tl == 0);
  CHECK(b.y_tl == 0);
  CHECK(b.width() == 10);

  b = box_at_centroid(98.0, 99.0, 10, 10, 100, 100);  // would overrun
  CHECK(b.x_br == 100);
  CHECK(b.x_tl == 90);
  CHECK(b.y_br == 100);
}

TEST_CASE("propose: single small blob inside the AC emits one centered box") {
  GrayImage g = GrayImage::filled(60, 40, 10);
  plant_run(g, 20, 15, 3, 220);  // centroid (21, 15)
  const BinaryMask ac = BinaryMask::filled(60, 40, true);
  MirpConfig cfg;
  const auto boxes = propose(g, ac, cfg);
  REQUIRE(boxes.size() == 1);
  CHECK(boxes[0].x_tl == 16);
  CHECK(boxes[0].x_br == 26);
  CHECK(boxes[0].y_tl == 10);
  CHECK(boxes[0].y_br == 20);
  CHECK(boxes[0].source_centroid.x == doctest::Approx(21.0));
  CHECK(boxes[0].source_area == 3);
}

TEST_CASE("propose: blob outside the AC mask is discarded") {
  GrayImage g = GrayImage::filled(60, 40, 10);
  plant_run(g, 20, 15, 3, 220);
  BinaryMask ac = BinaryMask::filled(60, 40, false);
  for (int y = 0; y < 40; ++y)
    for (int x = 30; x < 60; ++x) ac.set(x, y, true);  // AC is the right half
  MirpConfig cfg;
  CHECK(propose(g, ac, cfg).empty());
}

TEST_CASE("propose: component above s_max is discarded") {
  GrayImage g = GrayImage::filled(60, 40, 10);
  // 30-pixel rectangle 6x5
  for (int y = 12; y < 17; ++y)
    for (int x = 10; x < 16; ++x) g.at(x, y) = 220;
  const BinaryMask ac = BinaryMask::filled(60, 40, true);
  MirpConfig cfg;  // s_max 25
  CHECK(propose(g, ac, cfg).empty());
  cfg.s_max = 30;
  CHECK(propose(g, ac, cfg).size() == 1);
}

TEST_CASE("propose: dimension mismatch and config validation") {
  const GrayImage g = GrayImage::filled(8, 8, 0);
  CHECK_THROWS_AS(propose(g, BinaryMask::filled(9, 8, true), MirpConfig{}), DataError);
  MirpConfig bad;
  bad.lambda = 0.0;
  CHECK_THROWS_AS(propose(g, BinaryMask::filled(8, 8, true), bad), DataError);
  bad = MirpConfig{};
  bad.s_min = 5;
  bad.s_max = 4;
  CHECK_THROWS_AS(propose(g, BinaryMask::filled(8, 8, true), bad), DataError);
}

TEST_CASE("lambda monotonicity: bright sets nest and boxes stay inside the image") {
  Rng rng(77);
  for (int it = 0; it < 25; ++it) {
    const GrayImage g = random_image(rng, 40, 30);
    const int t = otsu_threshold(histogram(g));
    const BinaryMask ac = BinaryMask::filled(40, 30, true);
    BinaryMask prev = bright_mask(g, effective_threshold(t, 0.7));
    for (double lambda : {0.8, 0.9, 1.0, 1.1}) {
      const BinaryMask cur = bright_mask(g, effective_threshold(t, lambda));
      for (std::size_t i = 0; i < cur.bits.size(); ++i) {
        if (cur.bits[i]) CHECK(prev.bits[i]);  // lower lambda admits a superset
      }
      prev = cur;
    }
    MirpConfig cfg;
    cfg.lambda = 0.9;
    for (const auto& b : propose(g, ac, cfg)) {
      CHECK(b.width() == cfg.box_w);
      CHECK(b.height() == cfg.box_h);
      CHECK(b.x_tl >= 0);
      CHECK(b.y_tl >= 0);
      CHECK(b.x_br <= g.width);
      CHECK(b.y_br <= g.height);
    }
  }
}

TEST_CASE("propose: all-false AC mask yields no candidates") {
  Rng rng(78);
  for (int it = 0; it < 10; ++it) {
    const GrayImage g = random_image(rng, 24, 24);
    CHECK(propose(g, BinaryMask::filled(24, 24, false), MirpConfig{}).empty());
  }
}

TEST_CASE("propose: clip-to-mask mode clips component pixels instead of filtering") {
  GrayImage g = GrayImage::filled(40, 20, 10);
  // 4-pixel run straddling the AC boundary at x=22: pixels 20..23, centroid 21.5 -> 22 in AC
  plant_run(g, 20, 10, 4, 220);
  BinaryMask ac = BinaryMask::filled(40, 20, false);
  for (int y = 0; y < 20; ++y)
    for (int x = 22; x < 40; ++x) ac.set(x, y, true);

  MirpConfig cfg;
  cfg.s_min = 3;  // the clipped fragment (2 px) falls below s_min
  const auto filtered = propose(g, ac, cfg);
  REQUIRE(filtered.size() == 1);  // centroid rounds to 22, inside AC

  cfg.clip_to_mask = true;
  CHECK(propose(g, ac, cfg).empty());
  cfg.s_min = 1;
  const auto clipped = propose(g, ac, cfg);
  REQUIRE(clipped.size() == 1);
  CHECK(clipped[0].source_area == 2);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mcd/errors.hpp"
#include "mcd/fof.hpp"
#include "mcd/image_io.hpp"
#include "mcd/synth.hpp"
#include "test_util.hpp"

using namespace mcd;

namespace {

// Two bright rectangles of the given pixel areas on a black background.
GrayImage two_blob_image(int area_a, int area_b) {
  GrayImage g = GrayImage::filled(120, 60, 0);
  int placed = 0;
  for (int y = 5; placed < area_a; ++y)
    for (int x = 5; x < 15 && placed < area_a; ++x, ++placed) g.at(x, y) = 255;
  placed = 0;
  for (int y = 5; placed < area_b; ++y)
    for (int x = 80; x < 90 && placed < area_b; ++x, ++placed) g.at(x, y) = 255;
  return g;
}

}  // namespace

TEST_CASE("anterior_segment_mask: a single blob is returned verbatim") {
  GrayImage g = GrayImage::filled(40, 40, 0);
  for (int y = 10; y < 20; ++y)
    for (int x = 10; x < 20; ++x) g.at(x, y) = 200;
  const BinaryMask m = anterior_segment_mask(g, I2ACPConfig{});
  CHECK(m.count_true() == 100);
  CHECK(m.get(15, 15));
  CHECK(!m.get(5, 5));
}

TEST_CASE("anterior_segment_mask: merge ratio keeps or drops the second component") {
  I2ACPConfig cfg;  // merge_ratio 0.65
  // 100 vs 70: ratio 0.7 > 0.65, both kept.
  BinaryMask m = anterior_segment_mask(two_blob_image(100, 70), cfg);
  CHECK(m.count_true() == 170);
  // 100 vs 60: ratio 0.6 <= 0.65, only the largest.
  m = anterior_segment_mask(two_blob_image(100, 60), cfg);
  CHECK(m.count_true() == 100);
  CHECK(m.get(6, 6));
  CHECK(!m.get(81, 6));
}

TEST_CASE("anterior_segment_mask: no foreground components is an error") {
  CHECK_THROWS_AS(anterior_segment_mask(GrayImage::filled(16, 16, 50), I2ACPConfig{}),
                  ComputeError);
}

TEST_CASE("prompt_points: centered square with default offsets") {
  // 100x100 image, centered 20x20 square: centroid (49.5, 49.5).
  BinaryMask m = BinaryMask::filled(100, 100, false);
  for (int y = 40; y < 60; ++y)
    for (int x = 40; x < 60; ++x) m.set(x, y, true);
  const auto pts = prompt_points(m, I2ACPConfig{});
  REQUIRE(pts.size() == 2);
  CHECK(pts[0] == PromptPoint{50, 60});  // +0.1 * W
  CHECK(pts[1] == PromptPoint{50, 40});  // -0.1 * W
}

TEST_CASE("prompt_points: zero offset returns the centroid pixel") {
  BinaryMask m = BinaryMask::filled(50, 50, false);
  m.set(10, 20, true);
  I2ACPConfig cfg;
  cfg.offsets = {{0.0, 0.0}};
  const auto pts = prompt_points(m, cfg);
  REQUIRE(pts.size() == 1);
  CHECK(pts[0] == PromptPoint{10, 20});
}

TEST_CASE("prompt_points: clamped into bounds") {
  BinaryMask m = BinaryMask::filled(100, 100, false);
  for (int x = 0; x < 100; ++x) m.set(x, 2, true);  // centroid (49.5, 2)
  const auto pts = prompt_points(m, I2ACPConfig{});
  REQUIRE(pts.size() == 2);
  CHECK(pts[0] == PromptPoint{50, 12});
  CHECK(pts[1] == PromptPoint{50, 0});  // 2 - 10 clamps to 0
  for (const auto& p : pts) {
    CHECK(p.x >= 0);
    CHECK(p.x < 100);
    CHECK(p.y >= 0);
    CHECK(p.y < 100);
  }
}

TEST_CASE("prompt_points: symmetric offsets are symmetric about the centroid") {
  // Odd spans give an integral centroid (100, 99), so rounding is exact.
  BinaryMask m = BinaryMask::filled(200, 200, false);
  for (int y = 90; y <= 108; ++y)
    for (int x = 90; x <= 110; ++x) m.set(x, y, true);
  I2ACPConfig cfg;
  cfg.offsets = {{0.05, 0.08}, {-0.05, -0.08}};
  const auto pts = prompt_points(m, cfg);
  REQUIRE(pts.size() == 2);
  CHECK(pts[0].x + pts[1].x == 2 * 100);
  CHECK(pts[0].y + pts[1].y == 2 * 99);
  CHECK(pts[0] == PromptPoint{110, 115});
  CHECK(pts[1] == PromptPoint{90, 83});
}

TEST_CASE("prompt_points: empty mask rejected") {
  CHECK_THROWS_AS(prompt_points(BinaryMask::filled(8, 8, false), I2ACPConfig{}), ComputeError);
}

TEST_CASE("segment_ac: external mask passes through verbatim, errors on mismatch") {
  TempDir tmp("extmask");
  BinaryMask m = BinaryMask::filled(30, 20, false);
  for (int x = 4; x < 9; ++x) m.set(x, 7, true);
  save_mask_png(m, tmp.file("img_mask.png"));

  const GrayImage g = GrayImage::filled(30, 20, 0);
  const auto spec = SegmenterSpec::external(tmp.file("{stem}_mask.png"), "img");
  const BinaryMask out = segment_ac(g, {PromptPoint{1, 1}}, spec);
  CHECK(out.bits == m.bits);

  const GrayImage wrong = GrayImage::filled(31, 20, 0);
  CHECK_THROWS_AS(segment_ac(wrong, {PromptPoint{1, 1}}, spec), DataError);
  const auto missing = SegmenterSpec::external(tmp.file("{stem}_absent.png"), "img");
  CHECK_THROWS_AS(segment_ac(g, {PromptPoint{1, 1}}, missing), DataError);
}

TEST_CASE("segment_ac: fallback grows the dark chamber from the prompts") {
  const SynthConfig cfg;
  const SynthSample s = generate_sample(cfg, 0);
  const BinaryMask segment = anterior_segment_mask(s.image, I2ACPConfig{});
  const auto prompts = prompt_points(segment, I2ACPConfig{});
  const BinaryMask ac = segment_ac(s.image, prompts, SegmenterSpec::fallback());

  // Mask covers at least 90% of the true chamber.
  std::size_t covered = 0;
  for (std::size_t i = 0; i < ac.bits.size(); ++i) {
    covered += (ac.bits[i] && s.ac_mask_gt.bits[i]) ? 1 : 0;
  }
  CHECK(covered >= static_cast<std::size_t>(0.9 * s.ac_mask_gt.count_true()));

  // Subset of the below-mean set dilated by the closing radius.
  std::uint64_t sum = 0;
  for (auto p : s.image.pixels) sum += p;
  BinaryMask below = BinaryMask::filled(ac.width, ac.height, false);
  for (std::size_t i = 0; i < below.bits.size(); ++i) {
    below.bits[i] =
        static_cast<std::uint64_t>(s.image.pixels[i]) * s.image.pixel_count() < sum ? 1 : 0;
  }
  const BinaryMask envelope = dilate3x3(below);
  std::size_t outside_envelope = 0;
  for (std::size_t i = 0; i < ac.bits.size(); ++i) {
    if (ac.bits[i] && !envelope.bits[i]) ++outside_envelope;
  }
  CHECK(outside_envelope == 0);
}

TEST_CASE("segment_ac: bright seeds are skipped; all-bright seeds are an error") {
  GrayImage g = GrayImage::filled(20, 20, 0);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 20; ++x) g.at(x, y) = 200;  // top half bright
  // Seed on the bright half only -> error.
  CHECK_THROWS_AS(segment_ac(g, {PromptPoint{5, 5}}, SegmenterSpec::fallback()), ComputeError);
  // One dark seed next to a bright one still works.
  const BinaryMask m =
      segment_ac(g, {PromptPoint{5, 5}, PromptPoint{5, 15}}, SegmenterSpec::fallback());
  CHECK(m.count_true() > 0);
  CHECK_THROWS_AS(segment_ac(g, {}, SegmenterSpec::fallback()), DataError);
}

TEST_CASE("field_of_focus: synthetic sample reaches IoU >= 0.8 against ground truth") {
  const SynthConfig cfg;
  const SynthSample s = generate_sample(cfg, 3);
  const BinaryMask ac = field_of_focus(s.image, I2ACPConfig{}, SegmenterSpec::fallback());
  std::int64_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < ac.bits.size(); ++i) {
    inter += (ac.bits[i] && s.ac_mask_gt.bits[i]) ? 1 : 0;
    uni += (ac.bits[i] || s.ac_mask_gt.bits[i]) ? 1 : 0;
  }
  CHECK(static_cast<double>(inter) / uni >= 0.8);
}

TEST_CASE("field_of_focus: all-dark image reports no anterior segment") {
  CHECK_THROWS_AS(field_of_focus(GrayImage::filled(64, 64, 5), I2ACPConfig{},
                                 SegmenterSpec::fallback()),
                  ComputeError);
}

TEST_CASE("field_of_focus: deterministic and external-mask dispatch bypasses the fallback") {
  const SynthConfig cfg;
  const SynthSample s = generate_sample(cfg, 5);
  const BinaryMask a = field_of_focus(s.image, I2ACPConfig{}, SegmenterSpec::fallback());
  const BinaryMask b = field_of_focus(s.image, I2ACPConfig{}, SegmenterSpec::fallback());
  CHECK(a.bits == b.bits);

  TempDir tmp("fofext");
  save_mask_png(s.ac_mask_gt, tmp.file(s.id + "_ac.png"));
  const auto spec = SegmenterSpec::external(tmp.file("{stem}_ac.png"), s.id);
  const BinaryMask ext = field_of_focus(s.image, I2ACPConfig{}, spec);
  CHECK(ext.bits == s.ac_mask_gt.bits);
}

TEST_CASE("resolve_mask_path substitutes every {stem}") {
  CHECK(resolve_mask_path("/a/{stem}/m_{stem}.png", "x7") == "/a/x7/m_x7.png");
  CHECK(resolve_mask_path("/plain.png", "x") == "/plain.png");
}

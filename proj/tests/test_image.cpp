#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <png.h>

#include "mcd/errors.hpp"
#include "mcd/image.hpp"
#include "mcd/image_io.hpp"
#include "mcd/rng.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace mcd;

namespace {

BinaryMask random_mask(Rng& rng, int w, int h, double density) {
  BinaryMask m = BinaryMask::filled(w, h, false);
  for (auto& b : m.bits) b = rng.bernoulli(density) ? 1 : 0;
  return m;
}

GrayImage random_image(Rng& rng, int w, int h) {
  GrayImage g = GrayImage::filled(w, h, 0);
  for (auto& p : g.pixels) p = static_cast<std::uint8_t>(rng.below(256));
  return g;
}

void save_png_rgb(const Raster& r, const std::string& path) {
  std::FILE* fp = std::fopen(path.c_str(), "wb");
  REQUIRE(fp);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  REQUIRE(setjmp(png_jmpbuf(png)) == 0);
  png_init_io(png, fp);
  png_set_IHDR(png, info, r.width, r.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(r.height);
  for (int y = 0; y < r.height; ++y) {
    rows[y] = const_cast<png_bytep>(r.data.data() + static_cast<std::size_t>(y) * r.width * 3);
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

}  // namespace

TEST_CASE("to_gray: equal channels pass through as the common value") {
  Raster r{2, 1, 3, {40, 40, 40, 200, 200, 200}};
  const GrayImage g = to_gray(r);
  CHECK(g.pixels == std::vector<std::uint8_t>{40, 200});
}

TEST_CASE("to_gray: grayscale input is the identity") {
  Raster r{3, 1, 1, {1, 2, 3}};
  CHECK(to_gray(r).pixels == std::vector<std::uint8_t>{1, 2, 3});
}

TEST_CASE("to_gray: pure red maps to 76") {
  Raster r{1, 1, 3, {255, 0, 0}};
  CHECK(to_gray(r).pixels[0] == 76);  // round(0.299*255)
}

TEST_CASE("to_gray: unsupported channel count is rejected") {
  Raster r{1, 1, 2, {0, 0}};
  CHECK_THROWS_AS(to_gray(r), DataError);
  Raster empty{0, 0, 3, {}};
  CHECK_THROWS_AS(to_gray(empty), DataError);
}

TEST_CASE("mean_threshold_mask: uniform image has no foreground") {
  const GrayImage g = GrayImage::filled(5, 4, 100);
  CHECK(mean_threshold_mask(g).count_true() == 0);
}

TEST_CASE("mean_threshold_mask: two-level image keeps exactly the bright half") {
  GrayImage g = GrayImage::filled(4, 2, 0);
  for (int x = 0; x < 4; ++x) g.at(x, 1) = 200;
  const BinaryMask m = mean_threshold_mask(g);
  for (int x = 0; x < 4; ++x) {
    CHECK(!m.get(x, 0));
    CHECK(m.get(x, 1));
  }
}

TEST_CASE("mean_threshold_mask: 3x1 hand case") {
  GrayImage g{3, 1, {10, 20, 90}};  // mean 40
  const BinaryMask m = mean_threshold_mask(g);
  CHECK(!m.get(0, 0));
  CHECK(!m.get(1, 0));
  CHECK(m.get(2, 0));
}

TEST_CASE("mean_threshold_mask: strictly fewer true bits than pixels unless constant") {
  Rng rng(11);
  for (int it = 0; it < 50; ++it) {
    const GrayImage g = random_image(rng, 9, 7);
    const BinaryMask m = mean_threshold_mask(g);
    bool constant = true;
    for (auto p : g.pixels) constant &= p == g.pixels[0];
    if (constant) {
      CHECK(m.count_true() == 0);
    } else {
      CHECK(m.count_true() < g.pixel_count());
      CHECK(m.count_true() > 0);  // the max pixel always exceeds the mean
    }
  }
}

TEST_CASE("connected_components: all-false mask has no components") {
  const auto cl = connected_components(BinaryMask::filled(6, 6, false), Connectivity::Eight);
  CHECK(cl.component_count == 0);
  CHECK(cl.areas.empty());
}

TEST_CASE("connected_components: diagonal pixels split under 4, join under 8") {
  BinaryMask m = BinaryMask::filled(4, 4, false);
  m.set(1, 1, true);
  m.set(2, 2, true);
  CHECK(connected_components(m, Connectivity::Four).component_count == 2);
  CHECK(connected_components(m, Connectivity::Eight).component_count == 1);
}

TEST_CASE("connected_components: L-shaped blob area and centroid") {
  BinaryMask m = BinaryMask::filled(5, 5, false);
  // (1,1) (1,2) (1,3) (2,3) (3,3)
  m.set(1, 1, true);
  m.set(1, 2, true);
  m.set(1, 3, true);
  m.set(2, 3, true);
  m.set(3, 3, true);
  const auto cl = connected_components(m, Connectivity::Eight);
  REQUIRE(cl.component_count == 1);
  CHECK(cl.areas[0] == 5);
  CHECK(cl.centroids[0].x == doctest::Approx((1 + 1 + 1 + 2 + 3) / 5.0));
  CHECK(cl.centroids[0].y == doctest::Approx((1 + 2 + 3 + 3 + 3) / 5.0));
  // Centroid inside the bounding rectangle of the component.
  CHECK(cl.centroids[0].x >= 1.0);
  CHECK(cl.centroids[0].x <= 3.0);
  CHECK(cl.centroids[0].y >= 1.0);
  CHECK(cl.centroids[0].y <= 3.0);
}

TEST_CASE("connected_components: labels follow raster discovery order") {
  BinaryMask m = BinaryMask::filled(5, 3, false);
  m.set(4, 0, true);  // first in raster order
  m.set(0, 1, true);
  m.set(2, 2, true);
  const auto cl = connected_components(m, Connectivity::Eight);
  REQUIRE(cl.component_count == 3);
  CHECK(cl.labels[0 * 5 + 4] == 1);
  CHECK(cl.labels[1 * 5 + 0] == 2);
  CHECK(cl.labels[2 * 5 + 2] == 3);
}

TEST_CASE("connected_components: matches exhaustive flood fill on random masks") {
  Rng rng(42);
  for (int it = 0; it < 500; ++it) {
    const int w = 1 + static_cast<int>(rng.below(16));
    const int h = 1 + static_cast<int>(rng.below(16));
    const BinaryMask m = random_mask(rng, w, h, 0.15 + 0.7 * rng.uniform());
    for (auto conn : {Connectivity::Four, Connectivity::Eight}) {
      const auto cl = connected_components(m, conn);
      const auto ref = oracle::flood_fill_partition(m, conn);
      CHECK(oracle::same_partition(cl.labels, ref, m));
      // Areas and centroids recomputed from the labeling itself.
      std::vector<std::int64_t> areas(cl.component_count, 0);
      std::vector<double> sx(cl.component_count, 0), sy(cl.component_count, 0);
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const auto label = cl.labels[static_cast<std::size_t>(y) * w + x];
          if (label > 0) {
            ++areas[label - 1];
            sx[label - 1] += x;
            sy[label - 1] += y;
          }
        }
      }
      for (int k = 0; k < cl.component_count; ++k) {
        CHECK(areas[k] == cl.areas[k]);
        CHECK(cl.areas[k] >= 1);
        CHECK(cl.centroids[k].x == doctest::Approx(sx[k] / areas[k]));
        CHECK(cl.centroids[k].y == doctest::Approx(sy[k] / areas[k]));
      }
    }
  }
}

TEST_CASE("histogram: uniform and two-pixel cases") {
  Histogram256 h = histogram(GrayImage::filled(4, 4, 7));
  CHECK(h.counts[7] == 16);
  CHECK(h.total == 16);
  for (int v = 0; v < 256; ++v) {
    if (v != 7) CHECK(h.counts[v] == 0);
  }
  h = histogram(GrayImage{2, 1, {0, 255}});
  CHECK(h.counts[0] == 1);
  CHECK(h.counts[255] == 1);
}

TEST_CASE("histogram: counts sum to the pixel count and reproduce the mean exactly") {
  Rng rng(3);
  const GrayImage g = random_image(rng, 32, 32);
  const Histogram256 h = histogram(g);
  std::uint64_t total = 0, weighted = 0, pixel_sum = 0;
  for (int v = 0; v < 256; ++v) {
    total += h.counts[v];
    weighted += h.counts[v] * static_cast<std::uint64_t>(v);
  }
  for (auto p : g.pixels) pixel_sum += p;
  CHECK(total == 1024);
  CHECK(h.total == 1024);
  CHECK(weighted == pixel_sum);  // sum_v v*counts[v] / total == mean, exactly
}

TEST_CASE("mask_and: identity, annihilator, and overlap") {
  Rng rng(5);
  const BinaryMask a = random_mask(rng, 8, 8, 0.4);
  CHECK(mask_and(a, BinaryMask::filled(8, 8, true)).bits == a.bits);
  CHECK(mask_and(a, BinaryMask::filled(8, 8, false)).count_true() == 0);

  BinaryMask p = BinaryMask::filled(3, 1, false), q = BinaryMask::filled(3, 1, false);
  p.set(0, 0, true);
  p.set(1, 0, true);
  q.set(1, 0, true);
  q.set(2, 0, true);
  const BinaryMask both = mask_and(p, q);
  CHECK(both.count_true() == 1);
  CHECK(both.get(1, 0));
}

TEST_CASE("mask_and: dimension mismatch rejected; commutative, associative, idempotent") {
  CHECK_THROWS_AS(mask_and(BinaryMask::filled(2, 2, true), BinaryMask::filled(3, 2, true)),
                  DataError);
  Rng rng(6);
  for (int it = 0; it < 30; ++it) {
    const BinaryMask a = random_mask(rng, 7, 5, 0.5);
    const BinaryMask b = random_mask(rng, 7, 5, 0.5);
    const BinaryMask c = random_mask(rng, 7, 5, 0.5);
    CHECK(mask_and(a, b).bits == mask_and(b, a).bits);
    CHECK(mask_and(mask_and(a, b), c).bits == mask_and(a, mask_and(b, c)).bits);
    CHECK(mask_and(a, a).bits == a.bits);
  }
}

TEST_CASE("mask_centroid: empty mask rejected") {
  CHECK_THROWS_AS(mask_centroid(BinaryMask::filled(3, 3, false)), ComputeError);
}

TEST_CASE("close3x3: contains the input and fills single-pixel holes") {
  BinaryMask m = BinaryMask::filled(9, 9, false);
  for (int y = 2; y < 7; ++y)
    for (int x = 2; x < 7; ++x) m.set(x, y, true);
  m.set(4, 4, false);  // hole
  const BinaryMask closed = close3x3(m);
  CHECK(closed.get(4, 4));
  for (std::size_t i = 0; i < m.bits.size(); ++i) {
    if (m.bits[i]) CHECK(closed.bits[i]);  // closing is extensive here
  }
}

TEST_CASE("round_half_away") {
  CHECK(round_half_away(2.5) == 3);
  CHECK(round_half_away(-2.5) == -3);
  CHECK(round_half_away(2.4) == 2);
  CHECK(round_half_away(39.5) == 40);
}

TEST_CASE("PNG gray round trip") {
  TempDir tmp("png");
  Rng rng(9);
  const GrayImage g = random_image(rng, 37, 21);
  save_png_gray(g, tmp.file("img.png"));
  const GrayImage back = load_gray(tmp.file("img.png"));
  CHECK(back.width == g.width);
  CHECK(back.height == g.height);
  CHECK(back.pixels == g.pixels);
}

TEST_CASE("PNG RGB input converts through luminance") {
  TempDir tmp("pngrgb");
  Raster r{2, 1, 3, {255, 0, 0, 10, 10, 10}};
  save_png_rgb(r, tmp.file("rgb.png"));
  const GrayImage g = load_gray(tmp.file("rgb.png"));
  CHECK(g.pixels == std::vector<std::uint8_t>{76, 10});
}

TEST_CASE("PGM round trip and mask round trip") {
  TempDir tmp("pgm");
  Rng rng(10);
  const GrayImage g = random_image(rng, 19, 23);
  save_pgm(g, tmp.file("img.pgm"));
  CHECK(load_gray(tmp.file("img.pgm")).pixels == g.pixels);

  const BinaryMask m = random_mask(rng, 19, 23, 0.3);
  save_mask_png(m, tmp.file("mask.png"));
  CHECK(load_mask_png(tmp.file("mask.png")).bits == m.bits);
}

TEST_CASE("raster loader rejects garbage and missing files") {
  TempDir tmp("bad");
  std::ofstream(tmp.file("junk.png")) << "this is not a png";
  CHECK_THROWS_AS(load_raster(tmp.file("junk.png")), DataError);
  CHECK_THROWS_AS(load_raster(tmp.file("absent.png")), DataError);
}

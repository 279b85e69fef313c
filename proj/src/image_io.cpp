#include "mcd/image_io.hpp"

#include <png.h>

#include <cctype>
#include <cstdio>
#include <cstring>
#include <memory>
#include <vector>

#include "mcd/errors.hpp"

namespace mcd {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::string& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw DataError("cannot open " + path);
  return f;
}

Raster load_png(std::FILE* fp, const std::string& path) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw DataError("libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw DataError("libpng init failed");
  }
  Raster out;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("ill-formed PNG: " + path);
  }
  png_init_io(png, fp);
  png_read_info(png, info);

  const png_byte color_type = png_get_color_type(png, info);
  const png_byte bit_depth = png_get_bit_depth(png, info);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (bit_depth == 16) png_set_strip_16(png);
  if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  out.channels = static_cast<int>(png_get_channels(png, info));
  out.data.resize(static_cast<std::size_t>(out.width) * out.height * out.channels);
  rows.resize(out.height);
  const std::size_t stride = static_cast<std::size_t>(out.width) * out.channels;
  for (int y = 0; y < out.height; ++y) rows[y] = out.data.data() + y * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

int pgm_next_value(std::FILE* fp, const std::string& path) {
  // Skips whitespace and '#' comments per the PNM header grammar.
  int c = std::fgetc(fp);
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = std::fgetc(fp);
    } else if (!std::isspace(c)) {
      break;
    }
    c = std::fgetc(fp);
  }
  if (c == EOF || !std::isdigit(c)) throw DataError("ill-formed PGM header: " + path);
  int value = 0;
  while (c != EOF && std::isdigit(c)) {
    value = value * 10 + (c - '0');
    if (value > 1 << 24) throw DataError("ill-formed PGM header: " + path);
    c = std::fgetc(fp);
  }
  return value;
}

Raster load_pgm(std::FILE* fp, const std::string& path) {
  char magic[2];
  if (std::fread(magic, 1, 2, fp) != 2 || magic[0] != 'P' || magic[1] != '5') {
    throw DataError("not a binary PGM: " + path);
  }
  Raster out;
  out.width = pgm_next_value(fp, path);
  out.height = pgm_next_value(fp, path);
  const int maxval = pgm_next_value(fp, path);
  if (out.width < 1 || out.height < 1 || maxval < 1 || maxval > 255) {
    throw DataError("unsupported PGM geometry/maxval: " + path);
  }
  out.channels = 1;
  const std::size_t n = static_cast<std::size_t>(out.width) * out.height;
  out.data.resize(n);
  if (std::fread(out.data.data(), 1, n, fp) != n) throw DataError("truncated PGM: " + path);
  return out;
}

void save_png_gray_bytes(const std::uint8_t* data, int width, int height, const std::string& path) {
  FilePtr fp = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw DataError("libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw DataError("libpng init failed");
  }
  std::vector<png_bytep> rows(height);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("PNG write failed: " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y) {
    rows[y] = const_cast<png_bytep>(data + static_cast<std::size_t>(y) * width);
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

Raster load_raster(const std::string& path) {
  FilePtr fp = open_file(path, "rb");
  unsigned char magic[8] = {0};
  const std::size_t got = std::fread(magic, 1, 8, fp.get());
  std::rewind(fp.get());
  if (got >= 8 && png_sig_cmp(magic, 0, 8) == 0) return load_png(fp.get(), path);
  if (got >= 2 && magic[0] == 'P' && magic[1] == '5') return load_pgm(fp.get(), path);
  throw DataError("unrecognized raster format (expected PNG or binary PGM): " + path);
}

GrayImage load_gray(const std::string& path) { return to_gray(load_raster(path)); }

BinaryMask load_mask_png(const std::string& path) {
  const GrayImage g = load_gray(path);
  BinaryMask m{g.width, g.height, {}};
  m.bits.resize(g.pixel_count());
  for (std::size_t i = 0; i < g.pixels.size(); ++i) m.bits[i] = g.pixels[i] != 0 ? 1 : 0;
  return m;
}

void save_png_gray(const GrayImage& g, const std::string& path) {
  save_png_gray_bytes(g.pixels.data(), g.width, g.height, path);
}

void save_mask_png(const BinaryMask& m, const std::string& path) {
  std::vector<std::uint8_t> bytes(m.bits.size());
  for (std::size_t i = 0; i < m.bits.size(); ++i) bytes[i] = m.bits[i] ? 255 : 0;
  save_png_gray_bytes(bytes.data(), m.width, m.height, path);
}

void save_pgm(const GrayImage& g, const std::string& path) {
  FilePtr fp = open_file(path, "wb");
  std::fprintf(fp.get(), "P5\n%d %d\n255\n", g.width, g.height);
  if (std::fwrite(g.pixels.data(), 1, g.pixel_count(), fp.get()) != g.pixel_count()) {
    throw DataError("PGM write failed: " + path);
  }
}

}  // namespace mcd

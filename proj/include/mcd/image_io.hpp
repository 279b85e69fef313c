#pragma once

#include <string>

#include "mcd/image.hpp"

namespace mcd {

// Detects PNG vs binary PGM (P5) by magic bytes. PNG inputs are normalized to
// 8-bit gray or RGB (palette expanded, alpha stripped, 16-bit reduced).
Raster load_raster(const std::string& path);

GrayImage load_gray(const std::string& path);

// Masks persist as 8-bit gray PNG, 0 = background, 255 = foreground.
// Any nonzero pixel loads as foreground.
BinaryMask load_mask_png(const std::string& path);

void save_png_gray(const GrayImage& g, const std::string& path);
void save_mask_png(const BinaryMask& m, const std::string& path);
void save_pgm(const GrayImage& g, const std::string& path);

}  // namespace mcd

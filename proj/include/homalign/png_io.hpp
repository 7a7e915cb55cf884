#pragma once

#include <string>

#include "homalign/image.hpp"

namespace homalign {

/// Reads an 8- or 16-bit PNG (grayscale or RGB; palette images are expanded,
/// alpha is dropped) into intensities in [0,1].
Image load_png(const std::string& path);

/// Writes an 8-bit PNG; d=1 emits grayscale, d=3 RGB. Values are clamped to
/// [0,1] and rounded to the nearest of 256 levels.
void save_png(const Image& img, const std::string& path);

}  // namespace homalign

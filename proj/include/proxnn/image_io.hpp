#pragma once

#include <string>

#include "proxnn/grid.hpp"

namespace proxnn {

/// Reads 8/16-bit grayscale or RGB PNG, or binary PGM (P5) / PPM (P6).
/// Sample values are mapped linearly so that the maximum code maps to 1.
/// Alpha channels are dropped.
Image read_image(const std::string& path);

/// Writes PNG (by default) or PGM/PPM when the extension is .pgm/.ppm.
/// Values are clamped to [0,1] and rounded to the nearest code.
/// Images must have 1 or 3 channels.
void write_image(const std::string& path, const Image& img, int bit_depth = 8);

}  // namespace proxnn

#pragma once

#include <cstdint>
#include <vector>

#include "proxnn/grid.hpp"

namespace proxnn {

/// Peak signal-to-noise ratio in dB for a peak value of 1.
/// Returns +infinity when the images are identical.
double psnr(const Image& ref, const Image& est);

/// Anisotropic total variation: sum of absolute horizontal and vertical differences.
double total_variation(const Image& img);

/// Throws DomainError if any entry is NaN or infinite.
void require_finite(const Image& img, const char* what);

/// `count` square patches at uniformly drawn top-left offsets. Entries are copies.
std::vector<Image> extract_patches(const Image& img, int size, int count, std::uint64_t seed);

/// Piecewise-constant single-channel test image: 3 to 8 rectangles and ellipses with
/// random levels in [0,1] painted over a random background level.
Image synth_cartoon(int height, int width, std::uint64_t seed);

}  // namespace proxnn

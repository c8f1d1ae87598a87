#pragma once

#include <cstdint>

#include "proxnn/grid.hpp"

namespace proxnn {

enum class NoiseKind { Gaussian, LaplaceGauss, PoissonGauss };

struct NoiseSpec {
    NoiseKind kind = NoiseKind::Gaussian;
    double sigma = 0.0;          // Gaussian standard deviation (all kinds)
    double laplace_scale = 0.0;  // LaplaceGauss only
    double poisson_level = 1.0;  // PoissonGauss only; alpha = level * 255
    std::uint64_t seed = 0;

    void validate() const;
};

/// Returns img + noise. Not clipped.
///
/// PoissonGauss draws Poisson(x * 255 / alpha) * alpha / 255 per entry, with
/// alpha = poisson_level * 255 and negative intensities treated as zero rate,
/// then adds N(0, sigma^2).
Image add_noise(const Image& img, const NoiseSpec& spec);

}  // namespace proxnn

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "proxnn/grid.hpp"
#include "proxnn/noise.hpp"

namespace proxnn {

struct Sample {
    Image clean;
    Image noisy;
    double sigma = 0.0;  // standard deviation of the Gaussian part actually injected
};

struct Dataset {
    std::vector<Sample> samples;
    int patch_size = 0;
    std::string source;
};

/// Clean synthetic cartoons; image i uses seed derive_seed(seed, i).
std::vector<Image> synth_cartoons(int count, int height, int width, std::uint64_t seed);

/// Pairs each clean image with a noisy copy. Sample i draws its noise from
/// derive_seed(noise.seed, i), so the set is reproducible and order independent.
Dataset make_noisy_dataset(const std::vector<Image>& clean, const NoiseSpec& noise, std::string source = {});

/// Every .png/.pgm/.ppm file in `dir`, in lexicographic order.
std::vector<Image> load_image_dir(const std::string& dir);

/// Reads a JSON manifest: a list of {"clean": path, "sigma": real, "seed": integer}.
/// Relative paths are resolved against the manifest's directory. Gaussian noise is
/// injected with the given sigma and seed.
Dataset load_dataset_manifest(const std::string& path);

}  // namespace proxnn

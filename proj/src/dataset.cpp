#include "proxnn/dataset.hpp"

#include <algorithm>
#include <filesystem>

#include "json.hpp"

#include "proxnn/csv.hpp"
#include "proxnn/image.hpp"
#include "proxnn/image_io.hpp"
#include "proxnn/rng.hpp"

namespace proxnn {

std::vector<Image> synth_cartoons(int count, int height, int width, std::uint64_t seed)
{
    std::vector<Image> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) out.push_back(synth_cartoon(height, width, Rng::derive_seed(seed, i)));
    return out;
}

Dataset make_noisy_dataset(const std::vector<Image>& clean, const NoiseSpec& noise, std::string source)
{
    Dataset ds;
    ds.source = std::move(source);
    for (std::size_t i = 0; i < clean.size(); ++i) {
        NoiseSpec spec = noise;
        spec.seed = Rng::derive_seed(noise.seed, i);
        ds.samples.push_back(Sample{clean[i], add_noise(clean[i], spec), noise.sigma});
    }
    if (!clean.empty()) ds.patch_size = clean.front().height();
    return ds;
}

std::vector<Image> load_image_dir(const std::string& dir)
{
    namespace fs = std::filesystem;
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        std::string ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
        if (ext == ".png" || ext == ".pgm" || ext == ".ppm") files.push_back(entry.path().string());
    }
    std::sort(files.begin(), files.end());
    std::vector<Image> images;
    for (const auto& f : files) images.push_back(read_image(f));
    return images;
}

Dataset load_dataset_manifest(const std::string& path)
{
    namespace fs = std::filesystem;
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("dataset manifest '" + path + "': " + e.what());
    }
    if (!doc.is_array()) throw FormatError("dataset manifest '" + path + "' must be a JSON list");
    const fs::path base = fs::path(path).parent_path();
    Dataset ds;
    ds.source = path;
    for (const auto& entry : doc) {
        if (!entry.contains("clean") || !entry.contains("sigma") || !entry.contains("seed"))
            throw FormatError("dataset manifest entry needs clean, sigma and seed");
        fs::path p = entry.at("clean").get<std::string>();
        if (p.is_relative()) p = base / p;
        NoiseSpec spec;
        spec.sigma = entry.at("sigma").get<double>();
        spec.seed = entry.at("seed").get<std::uint64_t>();
        Image clean = read_image(p.string());
        Image noisy = add_noise(clean, spec);
        ds.samples.push_back(Sample{std::move(clean), std::move(noisy), spec.sigma});
    }
    if (!ds.samples.empty()) ds.patch_size = ds.samples.front().clean.height();
    return ds;
}

}  // namespace proxnn

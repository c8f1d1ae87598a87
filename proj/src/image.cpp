#include "proxnn/image.hpp"

#include <limits>

#include "proxnn/rng.hpp"

namespace proxnn {

std::string to_string(const Shape& s)
{
    return std::to_string(s.channels) + "x" + std::to_string(s.height) + "x" + std::to_string(s.width);
}

double psnr(const Image& ref, const Image& est)
{
    require_same_shape(ref.shape(), est.shape(), "psnr");
    if (ref.empty()) throw ShapeError("psnr: empty image");
    double sse = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
        const double d = ref[i] - est[i];
        sse += d * d;
    }
    const double mse = sse / static_cast<double>(ref.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

double total_variation(const Image& img)
{
    double tv = 0.0;
    for (int c = 0; c < img.channels(); ++c)
        for (int y = 0; y < img.height(); ++y)
            for (int x = 0; x < img.width(); ++x) {
                if (x + 1 < img.width()) tv += std::abs(img.at(c, y, x + 1) - img.at(c, y, x));
                if (y + 1 < img.height()) tv += std::abs(img.at(c, y + 1, x) - img.at(c, y, x));
            }
    return tv;
}

void require_finite(const Image& img, const char* what)
{
    if (!all_finite(img)) throw DomainError(std::string(what) + ": non-finite entry in input image");
}

std::vector<Image> extract_patches(const Image& img, int size, int count, std::uint64_t seed)
{
    if (size <= 0 || size > img.height() || size > img.width()) {
        throw ShapeError("extract_patches: patch size " + std::to_string(size) + " does not fit image " +
                         to_string(img.shape()));
    }
    Rng rng(seed);
    std::vector<Image> patches;
    patches.reserve(count);
    for (int n = 0; n < count; ++n) {
        const int oy = static_cast<int>(rng.uniform_int(0, img.height() - size));
        const int ox = static_cast<int>(rng.uniform_int(0, img.width() - size));
        Image p(img.channels(), size, size);
        for (int c = 0; c < img.channels(); ++c)
            for (int y = 0; y < size; ++y)
                for (int x = 0; x < size; ++x) p.at(c, y, x) = img.at(c, oy + y, ox + x);
        patches.push_back(std::move(p));
    }
    return patches;
}

Image synth_cartoon(int height, int width, std::uint64_t seed)
{
    if (height < 8 || width < 8) throw ShapeError("synth_cartoon: image must be at least 8x8");
    Rng rng(seed);
    Image img(1, height, width, rng.uniform());
    const int regions = static_cast<int>(rng.uniform_int(3, 8));
    for (int r = 0; r < regions; ++r) {
        const bool ellipse = rng.uniform() < 0.5;
        const double level = rng.uniform();
        const double cy = rng.uniform(0.0, height);
        const double cx = rng.uniform(0.0, width);
        const double ry = rng.uniform(0.15, 0.45) * height;
        const double rx = rng.uniform(0.15, 0.45) * width;
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) {
                const double dy = (y + 0.5 - cy) / ry;
                const double dx = (x + 0.5 - cx) / rx;
                const bool inside = ellipse ? (dy * dy + dx * dx <= 1.0) : (std::abs(dy) <= 1.0 && std::abs(dx) <= 1.0);
                if (inside) img.at(0, y, x) = level;
            }
    }
    return img;
}

}  // namespace proxnn

#include "proxnn/noise.hpp"

#include <algorithm>

#include "proxnn/image.hpp"
#include "proxnn/rng.hpp"

namespace proxnn {

void NoiseSpec::validate() const
{
    if (!(sigma >= 0.0)) throw ParameterError("noise: sigma must be >= 0");
    if (!(laplace_scale >= 0.0)) throw ParameterError("noise: laplace scale must be >= 0");
    if (kind == NoiseKind::PoissonGauss && !(poisson_level > 0.0))
        throw ParameterError("noise: poisson level must be > 0");
}

Image add_noise(const Image& img, const NoiseSpec& spec)
{
    spec.validate();
    require_finite(img, "add_noise");
    Rng rng(spec.seed);
    Image out(img.shape());
    const double alpha = spec.poisson_level * 255.0;
    for (std::size_t i = 0; i < img.size(); ++i) {
        double v = img[i];
        switch (spec.kind) {
        case NoiseKind::Gaussian:
            break;
        case NoiseKind::LaplaceGauss:
            v += rng.laplace(spec.laplace_scale);
            break;
        case NoiseKind::PoissonGauss: {
            const double rate = std::max(img[i], 0.0) * 255.0 / alpha;
            v = static_cast<double>(rng.poisson(rate)) * alpha / 255.0;
            break;
        }
        }
        if (spec.sigma > 0.0) v += spec.sigma * rng.normal();
        out[i] = v;
    }
    return out;
}

}  // namespace proxnn

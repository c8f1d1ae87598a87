#include "proxnn/pnp.hpp"

#include <cmath>

#include "proxnn/csv.hpp"
#include "proxnn/errors.hpp"
#include "proxnn/image.hpp"
#include "proxnn/parallel.hpp"

namespace proxnn {

std::string PnpTrace::csv() const
{
    CsvTable t({"iter", "psnr", "residual"});
    for (std::size_t i = 0; i < residual.size(); ++i)
        t.add_row({static_cast<double>(i + 1), i < psnr.size() ? psnr[i] : std::nan(""), residual[i]});
    return t.str();
}

Image grad_step(const Image& x, const BlurKernel& A, const Image& y, double gamma)
{
    require_same_shape(x.shape(), y.shape(), "grad_step");
    Image r = blur_apply(A, x);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] -= y[i];
    const Image g = blur_adjoint(A, r);
    Image out = x;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= gamma * g[i];
    return out;
}

PnpResult pnp_fb(const Image& y, const BlurKernel& A, const PnpConfig& cfg, const PnnModel& denoiser,
                 const std::optional<Image>& truth)
{
    denoiser.validate();
    require_finite(y, "observation");
    if (y.channels() != denoiser.C)
        throw ShapeError("pnp_fb: observation has " + std::to_string(y.channels()) + " channels, denoiser expects " +
                         std::to_string(denoiser.C));
    if (truth) require_same_shape(truth->shape(), y.shape(), "pnp_fb ground truth");
    if (cfg.iterations <= 0) throw ParameterError("pnp_fb: iteration budget must be > 0");
    if (!(cfg.beta > 0.0)) throw ParameterError("pnp_fb: beta must be > 0");
    if (!(cfg.sigma >= 0.0)) throw ParameterError("pnp_fb: sigma must be >= 0");

    PnpResult res;
    SpectralNormOptions so;
    so.tol = 1e-10;
    so.max_iter = 5000;
    so.seed = cfg.norm_seed;
    res.blur_norm = spectral_norm(make_blur_operator(A, y.shape()), so).norm;
    const double limit = 2.0 / (res.blur_norm * res.blur_norm);
    res.gamma = cfg.gamma ? *cfg.gamma : 1.99 / (res.blur_norm * res.blur_norm);
    if (!(res.gamma > 0.0)) throw ParameterError("pnp_fb: gamma must be > 0");
    if (res.gamma >= limit && !cfg.unsafe_gamma)
        throw ParameterError("pnp_fb: gamma = " + format_real(res.gamma) + " is not below 2/||A||^2 = " +
                             format_real(limit) + " (pass the unsafe override to run it anyway)");
    res.nu = cfg.lambda() * res.gamma;
    const bool warm = cfg.warm_start.value_or(denoiser.arch == ArchKind::DDFB || denoiser.arch == ArchKind::DDiFB);

    Image x = y;
    FeatureMap u = conv_apply(denoiser.layers.front().forward, y);
    const double stop = 1e-8 * norm2(y);
    for (int t = 0; t < cfg.iterations; ++t) {
        const Image z = grad_step(x, A, y, res.gamma);
        ForwardOptions fo;
        if (warm) fo.initial_dual = u;
        ForwardResult fr = pnn_forward(denoiser, z, res.nu, fo);
        const double r = diff_norm(fr.x, x);
        x = std::move(fr.x);
        u = std::move(fr.u);
        res.trace.residual.push_back(r);
        if (truth) res.trace.psnr.push_back(psnr(*truth, x));
        res.iterations = t + 1;
        if (!std::isfinite(r)) throw DomainError("pnp_fb: iterates became non-finite at iteration " + std::to_string(t + 1));
        if (cfg.residual_stop && r < stop) break;
    }
    res.x = std::move(x);
    return res;
}

MonotonicityCheck residual_monotonicity(const std::vector<double>& r, double slack)
{
    if (r.size() < 3) throw ParameterError("residual_monotonicity needs at least three residuals");
    MonotonicityCheck out;
    for (std::size_t t = 1; t < r.size(); ++t) {
        if (r[t] > r[t - 1] + slack) {
            out.ok = false;
            out.first_violation = static_cast<int>(t);
            break;
        }
    }
    return out;
}

std::string BetaSweep::csv() const
{
    CsvTable t({"beta", "psnr"});
    for (std::size_t i = 0; i < betas.size(); ++i) t.add_row({betas[i], psnr[i]});
    return t.str();
}

BetaSweep beta_sweep(const Image& y, const BlurKernel& A, const PnpConfig& config, const PnnModel& denoiser,
                     const std::vector<double>& betas, const Image& truth)
{
    if (betas.empty()) throw ParameterError("beta_sweep: empty grid");
    BetaSweep out;
    out.betas = betas;
    out.psnr.assign(betas.size(), 0.0);
    parallel_for(betas.size(), [&](std::size_t i) {
        PnpConfig c = config;
        c.beta = betas[i];
        out.psnr[i] = psnr(truth, pnp_fb(y, A, c, denoiser).x);
    });
    std::size_t best = 0;
    for (std::size_t i = 1; i < betas.size(); ++i) {
        if (out.psnr[i] > out.psnr[best] || (out.psnr[i] == out.psnr[best] && betas[i] < betas[best])) best = i;
    }
    out.best_beta = betas[best];
    out.best_psnr = out.psnr[best];
    return out;
}

}  // namespace proxnn

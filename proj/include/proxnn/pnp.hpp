#pragma once

#include <optional>
#include <string>
#include <vector>

#include "proxnn/linops.hpp"
#include "proxnn/pnn.hpp"

namespace proxnn {

struct PnpConfig {
    std::optional<double> gamma;  // empty: 1.99 / ||A||^2
    double beta = 1.0;
    double sigma = 0.0;           // measurement noise level; lambda = (beta sigma)^2
    int iterations = 500;
    std::optional<bool> warm_start;  // empty: on for DDFB/DDiFB, off for DCP/DScCP
    bool unsafe_gamma = false;    // allow gamma >= 2 / ||A||^2
    bool residual_stop = false;   // stop once ||x_{t+1} - x_t|| < 1e-8 ||y||
    std::uint64_t norm_seed = 0;

    double lambda() const { return beta * sigma * beta * sigma; }
};

struct PnpTrace {
    std::vector<double> psnr;      // against the ground truth when one was given
    std::vector<double> residual;  // ||x_{t+1} - x_t||
    std::string csv() const;       // iter,psnr,residual
};

struct PnpResult {
    Image x;
    PnpTrace trace;
    double gamma = 0.0;
    double nu = 0.0;  // lambda * gamma, handed to the denoiser
    double blur_norm = 0.0;
    int iterations = 0;
};

/// x - gamma A^T (A x - y)
Image grad_step(const Image& x, const BlurKernel& A, const Image& y, double gamma);

/// Forward-backward with the network as backward step: z_t = grad_step(x_t),
/// (x_{t+1}, u_{t+1}) = network(z_t) with nu = lambda gamma. Starts from x_0 = y,
/// u_0 = D_1 y. With warm start u_t is fed back as the initial dual; otherwise every
/// call uses u_0 = D_1 z_t.
PnpResult pnp_fb(const Image& y, const BlurKernel& A, const PnpConfig& config, const PnnModel& denoiser,
                 const std::optional<Image>& truth = std::nullopt);

struct MonotonicityCheck {
    bool ok = true;
    int first_violation = -1;  // index t with r_t > r_{t-1} + slack
};

/// Checks r_t <= r_{t-1} + slack for every t >= 1. Needs at least three residuals.
MonotonicityCheck residual_monotonicity(const std::vector<double>& residuals, double slack);

struct BetaSweep {
    std::vector<double> betas;
    std::vector<double> psnr;
    double best_beta = 0.0;
    double best_psnr = 0.0;
    std::string csv() const;  // beta,psnr
};

/// pnp_fb per beta; the best final PSNR wins and ties go to the smaller beta.
BetaSweep beta_sweep(const Image& y, const BlurKernel& A, const PnpConfig& config, const PnnModel& denoiser,
                     const std::vector<double>& betas, const Image& truth);

}  // namespace proxnn

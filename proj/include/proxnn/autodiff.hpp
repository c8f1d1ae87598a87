#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "proxnn/dataset.hpp"
#include "proxnn/pnn.hpp"

namespace proxnn {

/// Gradient with respect to every learnable value, laid out as flatten_params.
struct GradPack {
    std::vector<double> values;
};

struct VjpOptions {
    /// Treat the LNO layer norms as constants instead of differentiating them with
    /// the rank-one rule d||D||/dD = u1 v1^T.
    bool stop_norm_gradient = false;
    /// Skip parameter gradients (Jacobian-transpose products only need grad_z).
    bool params = true;
};

struct VjpResult {
    GradPack grads;
    Image grad_z;
    /// Gradient with respect to the supplied initial dual (zero-size when u_0 = D_1 z).
    FeatureMap grad_initial_dual;
};

/// Exact reverse-mode product for <cot_x, x_K> + <cot_u, u_K>, using the masks and
/// intermediates recorded on `tape`. Subgradients at clip boundaries are taken as zero.
VjpResult pnn_vjp(const PnnModel& model, const Tape& tape, const Image& cot_x,
                  const std::optional<FeatureMap>& cot_u = std::nullopt, const VjpOptions& opts = {});

/// Forward-mode product J v of z -> x_K with the activation pattern frozen at the tape.
Image pnn_jvp_input(const PnnModel& model, const Tape& tape, const Image& v);

struct LossResult {
    double loss = 0.0;  // batch mean of 0.5 ||clean - x_K||^2
    GradPack grads;
    double mean_psnr = 0.0;
};

/// Loss of the batch with nu = sigma_s^2 per sample and its exact gradient (batch mean).
LossResult loss_and_grad(const PnnModel& model, const std::vector<Sample>& batch, const VjpOptions& opts = {});

struct GradCheckOptions {
    double fd_step = 1e-5;
    int coordinates = 64;    // random parameter coordinates to probe
    int input_coordinates = 16;  // random entries of z to probe as well
    std::uint64_t seed = 0;
    bool stop_norm_gradient = false;
    // Denominator floor of the relative error. Central differences at step 1e-5 carry
    // round-off near 1e-10, so smaller gradients are effectively compared absolutely.
    double abs_floor = 1e-5;
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    int checked = 0;
    int skipped = 0;  // coordinates whose +/- step changed an activation mask
};

/// Compares pnn_vjp on f = <c, x_K> (c seeded Gaussian) against central differences.
/// A coordinate is skipped when the forward pass at either end of its bracket records
/// a different activation pattern than at the base point.
GradCheckReport grad_check(const PnnModel& model, const Image& z, double nu, const GradCheckOptions& opts = {});

}  // namespace proxnn

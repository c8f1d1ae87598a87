#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "proxnn/dataset.hpp"
#include "proxnn/pnn.hpp"

namespace proxnn {

/// Jacobian of a denoiser at a base point: J v and J^T w for a fixed activation pattern.
struct JacobianProbe {
    Shape shape;
    std::function<Image(const Image&)> jvp;
    std::function<Image(const Image&)> vjp;
};

/// Probe of z -> x_K frozen at the tape of pnn_forward(model, z, nu). `model` must outlive it.
JacobianProbe make_probe(const PnnModel& model, const Image& z, double nu);
/// Linear stand-ins: f = s * Id and f = diag(d).
JacobianProbe scaled_identity_probe(Shape shape, double scale);
JacobianProbe diagonal_probe(Shape shape, std::vector<double> diag);
/// J h = 2 J f - Id for h = 2 f - Id.
JacobianProbe reflected_probe(const JacobianProbe& f);

Image jacobian_apply(const JacobianProbe& probe, const Image& v);
Image jacobian_adjoint_apply(const JacobianProbe& probe, const Image& w);

struct JacobianNormOptions {
    double tol = 1e-6;
    int max_iter = 500;
    std::uint64_t seed = 0;
};

SpectralNormResult jacobian_spectral_norm(const JacobianProbe& probe, const JacobianNormOptions& opts = {});

enum class TargetMap { F, H };  // f itself or h = 2 f - Id

struct RobustnessReport {
    TargetMap target = TargetMap::F;
    std::vector<double> norms;  // one per sample
    std::vector<bool> converged;
    double max = 0.0;
    double median = 0.0;
    double q1 = 0.0;
    double q3 = 0.0;

    std::string csv() const;   // sample,norm
    std::string json() const;  // {"target","max","median","q1","q3","count"}
};

/// Summary statistics with linear interpolation between order statistics.
RobustnessReport summarize(TargetMap target, std::vector<double> norms, std::vector<bool> converged = {});

/// Jacobian norms of the model at every sample's noisy image with nu = sigma_s^2.
RobustnessReport lipschitz_estimate(const PnnModel& model, const std::vector<Sample>& samples,
                                    const JacobianNormOptions& opts = {});
/// Same for h = 2 f - Id; below 1 on every sample means f looked firmly nonexpansive there.
RobustnessReport nonexpansiveness_score(const PnnModel& model, const std::vector<Sample>& samples,
                                        const JacobianNormOptions& opts = {});

struct ProductBoundOptions {
    int height = 0;  // 0: the model's norm shape
    int width = 0;
    double tol = 1e-10;
    int max_iter = 5000;
    std::uint64_t seed = 0xb0b;
};

/// Upper bound on the Lipschitz constant of z -> x_K on height x width images.
/// Each layer acts on the stacked state (x, u, z) as three affine maps, each followed
/// by a coordinatewise 1-Lipschitz clip: a = u + tau D x, then b = primal
/// pre-activation together with the dual skip, then the primal skip. The bound is the
/// norm of z -> (z, D_1 z, z) times the product of the three linear parts' norms.
double lipschitz_product_bound(const PnnModel& model, const ProductBoundOptions& opts = {});

}  // namespace proxnn

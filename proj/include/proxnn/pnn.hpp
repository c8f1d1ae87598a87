#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "proxnn/linops.hpp"
#include "proxnn/prox.hpp"

namespace proxnn {

/// Unfolded architectures built on the dual-then-primal Arrow-Hurwicz layer.
enum class ArchKind {
    DDFB,   // dual forward-backward (mu = +inf)
    DDiFB,  // DDFB with inertial skip on the dual variable
    DCP,    // Chambolle-Pock: x_k = 2 x~_k - x_{k-1}
    DScCP,  // strongly convex CP: x_k = (1 + alpha_k) x~_k - alpha_k x_{k-1}
};

/// LNO: tied adjoints and step sizes derived from the layer norms.
/// LFO: independently learned adjoint surrogates, step sizes absorbed into the kernels.
enum class VariantKind { LNO, LFO };

std::string to_string(ArchKind a);
std::string to_string(VariantKind v);
ArchKind parse_arch(const std::string& s);  // case-insensitive; throws ParameterError
VariantKind parse_variant(const std::string& s);

struct PnnLayerParams {
    ConvStack forward;   // D_{k,D}: C -> J
    AdjointPolicy adjoint;  // tied (LNO) or untied J -> C stack (LFO)

    // Cached leading singular triple of `forward` at the model's norm shape (LNO only).
    double norm = 0.0;
    std::vector<double> left_vector;
    std::vector<double> right_vector;
};

/// Power-iteration settings used to refresh the LNO layer norms. The norm is taken
/// on images of size norm_height x norm_width.
struct NormSettings {
    int height = 32;
    int width = 32;
    double tol = 1e-10;
    int max_iter = 2000;
    std::uint64_t seed = 0x5eed;
};

struct PnnModel {
    ArchKind arch = ArchKind::DDFB;
    VariantKind variant = VariantKind::LNO;
    int K = 0;  // layers
    int J = 0;  // features
    int C = 0;  // channels
    std::vector<PnnLayerParams> layers;
    /// Learnable log-step scalars: DCP one shared log(mu); DScCP-LFO log(mu_0);
    /// DScCP-LNO one log(mu_k) per layer; empty otherwise.
    std::vector<double> log_mu;
    double inertia_a = 3.0;  // DDiFB
    BoxConstraint box = BoxConstraint::unit();
    NormSettings norm_settings;

    /// Checks shapes and the Table-of-parameters structure for (arch, variant).
    void validate() const;
    /// Recomputes the LNO layer norms, warm-starting from the cached vectors when present.
    void refresh_norms();
    /// Same, but always from the seeded start (used after loading a model).
    void refresh_norms_cold();
};

/// Number of learnable log(mu) scalars stored for (arch, variant, K).
int scalar_count(ArchKind arch, VariantKind variant, int K);

/// Randomly initialized model: kernels uniform in [-1/sqrt(9C), 1/sqrt(9C)], mu = 1.
PnnModel make_model(ArchKind arch, VariantKind variant, int K, int J, int C, std::uint64_t seed,
                    NormSettings norms = {});

/// Model whose layers all share D (tied adjoint): the limit-case configuration.
/// For DScCP the per-layer mu follow mu_{k+1} = (1+2mu_k)^{-1/2} mu_k from mu0;
/// for DCP the shared mu is mu0.
PnnModel make_tied_model(ArchKind arch, int K, const ConvStack& D, double mu0, NormSettings norms);

/// Published parameter count ledger (conv weights plus the scalar table below).
///   LNO: DDFB +0, DDiFB +0, DCP +1, DScCP +K
///   LFO: DDFB +0, DDiFB +1, DCP +1, DScCP +2K
long long param_count(ArchKind arch, VariantKind variant, int K, int J, int C);
/// Parameters this implementation actually stores and trains.
long long learnable_count(const PnnModel& model);

/// Step-size coefficients of one layer after applying the architecture rules.
struct LayerCoefficients {
    double tau = 1.0;    // dual step (1 under LFO: absorbed in D)
    double mu = 0.0;     // primal step; +inf for DDFB / DDiFB
    double alpha = 0.0;  // primal skip weight (DCP: 1, DScCP: (1+2mu)^{-1/2})
    double rho = 0.0;    // dual skip weight (DDiFB)
};

struct ForwardOptions {
    /// Overrides u_0 = D_1 z (PnP warm start).
    std::optional<FeatureMap> initial_dual;
    /// Replaces rho_k (DDiFB) or alpha_k (DScCP) for every layer; under DScCP-LFO the
    /// override also drives the mu recursion.
    std::optional<double> inertia_override;
    bool record_tape = false;
};

std::vector<LayerCoefficients> layer_coefficients(const PnnModel& model,
                                                  std::optional<double> inertia_override = std::nullopt);

/// Everything reverse mode and Jacobian probes need from one forward pass.
struct LayerRecord {
    LayerCoefficients coeff;
    Image x_prev;                       // x_{k-1}
    FeatureMap u_prev;                  // u_{k-1}
    FeatureMap dx_prev;                 // D x_{k-1} (before tau)
    std::vector<std::uint8_t> dual_mask;    // 1 iff |pre-activation| < nu
    FeatureMap u_tilde;                 // dual sublayer output
    Image adj_u;                        // adjoint applied to u_tilde
    std::vector<std::uint8_t> primal_mask;  // 1 iff lo < pre-activation < hi
    Image x_tilde;                      // primal sublayer output
};

struct Tape {
    const PnnModel* model = nullptr;
    Image z;
    double nu = 0.0;
    bool dual_from_z = true;  // u_0 = D_1 z (false when an initial dual was supplied)
    std::optional<double> inertia_override;
    std::vector<LayerRecord> layers;
};

struct ForwardResult {
    Image x;        // x_K
    FeatureMap u;   // u_K
    Image x_tilde;  // last primal sublayer output (in the box for every architecture)
    std::optional<Tape> tape;
};

/// hardtanh(u + tau D x, nu).
FeatureMap dual_sublayer(const Image& x, const FeatureMap& u, const PnnLayerParams& layer, double tau, double nu);
/// P_C(mu/(1+mu)(z - adjoint(u)) + x/(1+mu)); mu = +inf gives P_C(z - adjoint(u)).
Image primal_sublayer(const Image& x, const FeatureMap& u, const PnnLayerParams& layer, double mu, const Image& z,
                      const BoxConstraint& box);

/// Runs the K layers from (x_0, u_0) = (z, D_1 z). nu = +inf disables the dual clip.
ForwardResult pnn_forward(const PnnModel& model, const Image& z, double nu, const ForwardOptions& opts = {});

/// Flat parameter vector in a fixed order: per layer "layer<k>.forward" then
/// "layer<k>.adjoint" (LFO), then "log_mu".
struct ParamSegment {
    std::string name;
    std::vector<int> shape;
    std::size_t offset = 0;
    std::size_t length = 0;
};
std::vector<ParamSegment> param_layout(const PnnModel& model);
std::vector<double> flatten_params(const PnnModel& model);
/// Writes params back; LNO norms are refreshed (warm) afterwards.
void assign_params(PnnModel& model, std::span<const double> params);

}  // namespace proxnn

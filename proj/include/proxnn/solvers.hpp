#pragma once

#include <string>
#include <vector>

#include "proxnn/linops.hpp"
#include "proxnn/prox.hpp"

namespace proxnn {

/// Which iteration a schedule drives.
enum class Regime { DFB, DiFB, CP, ScCP, AH };

/// Per-iteration step sizes. mu entries may be +infinity (dual forward-backward).
struct SolverSchedule {
    Regime regime = Regime::DFB;
    std::vector<double> tau;
    std::vector<double> rho;    // dual inertia (DiFB)
    std::vector<double> mu;     // primal step
    std::vector<double> alpha;  // primal extrapolation (CP family)
    double inertia_a = 0.0;

    int length() const { return static_cast<int>(tau.size()); }
    /// Checks the regime invariants (rho = 0 for DFB, alpha = 1 for CP, alpha = 0 for AH, ...).
    void validate() const;
};

struct SolverTrace {
    std::vector<double> objective;
    std::vector<double> primal_change;
    std::vector<double> dual_change;

    std::size_t size() const { return objective.size(); }
    /// CSV with columns iter, F, primal_change, dual_change.
    std::string csv() const;
};

struct SolverResult {
    Image x;
    FeatureMap u;
    SolverTrace trace;
    int iterations = 0;
};

/// 0.5||x - z||^2 + nu ||D x||_1 when x lies in the box (1e-12 slack), +infinity otherwise.
double objective_F(const Image& x, const Image& z, const ConvStack& D, double nu, const BoxConstraint& box);

/// t_k = (k + a - 1) / a for k >= 1.
double inertia_t(int k, double a);
/// rho_k = (t_k - 1) / t_{k+1}.
double inertia_rho(int k, double a);

/// Plain: tau = 1.99 / ||D||^2, rho = 0. Accelerated: tau = 0.99 / ||D||^2 and
/// rho_k = (t_k - 1)/t_{k+1}, k = 1..K. mu is +infinity throughout.
SolverSchedule difb_schedule(double a, double normD, bool accelerated, int K);

/// Plain CP: constant mu0, tau = 0.99/(mu0 ||D||^2), alpha = 1. Accelerated ScCP:
/// tau_0 = 0.99/(mu0 ||D||^2), alpha_k = (1+2mu_k)^{-1/2}, mu_{k+1} = alpha_k mu_k,
/// tau_{k+1} = tau_k / alpha_k.
SolverSchedule sccp_schedule(double mu0, double normD, bool accelerated, int K);

/// Arrow-Hurwicz: constant mu, tau = 0.99/(mu ||D||^2), alpha = 0.
SolverSchedule ah_schedule(double mu, double normD, int K);

struct SolveOptions {
    /// Relative primal change ||x_k - x_{k-1}|| / max(||x_k||, 1) below which iteration stops.
    double tol = 1e-10;
};

/// Dual (inertial) forward-backward from u_0 = v_0 = 0; returns P_C(z - D^T u_K).
SolverResult difb_solve(const Image& z, const ConvStack& D, const AdjointPolicy& policy, double nu,
                        const BoxConstraint& box, const SolverSchedule& schedule, int K, const SolveOptions& opts = {});

/// (Strongly convex) Chambolle-Pock from x_0 = P_C(z), u_0 = 0; primal step then dual step.
SolverResult sccp_solve(const Image& z, const ConvStack& D, const AdjointPolicy& policy, double nu,
                        const BoxConstraint& box, const SolverSchedule& schedule, int K, const SolveOptions& opts = {});

struct PrimalDualState {
    Image x;
    FeatureMap u;
    Image x_prev;
    FeatureMap u_prev;
    int k = 0;
};

/// One Arrow-Hurwicz step, dual first:
///   u+ = hardtanh(u + tau D x, nu);  x+ = P_C(mu/(1+mu)(z - D^T u+) + x/(1+mu)).
/// mu = +infinity gives x+ = P_C(z - D^T u+).
PrimalDualState ah_joint_step(const PrimalDualState& state, double tau, double mu, const Image& z, const ConvStack& D,
                              double nu, const BoxConstraint& box);

/// Primal combination used by every primal update:
/// P_C(w (z - a) + (1 - w) x) with w = mu/(1+mu), and P_C(z - a) for mu = +infinity.
Image primal_update(const Image& z, const Image& adj_u, const Image& x, double mu, const BoxConstraint& box);

}  // namespace proxnn

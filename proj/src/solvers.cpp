#include "proxnn/solvers.hpp"

#include <cmath>
#include <limits>

#include "proxnn/csv.hpp"

namespace proxnn {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

void require_tied(const AdjointPolicy& policy)
{
    if (policy.mode != AdjointMode::Tied)
        throw ContractError("MAP solvers require the exact adjoint; untied policies are not supported");
}

double relative_change(const Image& now, const Image& before)
{
    return diff_norm(now.values(), before.values()) / std::max(norm2(now), 1.0);
}
}  // namespace

void SolverSchedule::validate() const
{
    const std::size_t n = tau.size();
    if (rho.size() != n || mu.size() != n || alpha.size() != n) throw ContractError("schedule vectors differ in length");
    for (std::size_t k = 0; k < n; ++k) {
        if (!(tau[k] > 0.0)) throw ParameterError("schedule: tau must be > 0");
        if (!(mu[k] > 0.0)) throw ParameterError("schedule: mu must be > 0");
        if (!(rho[k] >= 0.0) || !(alpha[k] >= 0.0)) throw ParameterError("schedule: inertia must be >= 0");
        const bool dual_regime = regime == Regime::DFB || regime == Regime::DiFB;
        if (std::isinf(mu[k]) != dual_regime) throw ContractError("schedule: mu = inf only in dual regimes");
        if (regime == Regime::DFB && rho[k] != 0.0) throw ContractError("schedule: DFB requires rho = 0");
        if (regime == Regime::CP && alpha[k] != 1.0) throw ContractError("schedule: CP requires alpha = 1");
        if (regime == Regime::AH && alpha[k] != 0.0) throw ContractError("schedule: AH requires alpha = 0");
    }
}

std::string SolverTrace::csv() const
{
    CsvTable t({"iter", "F", "primal_change", "dual_change"});
    for (std::size_t k = 0; k < objective.size(); ++k)
        t.add_row({static_cast<double>(k + 1), objective[k], primal_change[k], dual_change[k]});
    return t.str();
}

double objective_F(const Image& x, const Image& z, const ConvStack& D, double nu, const BoxConstraint& box)
{
    require_same_shape(x.shape(), z.shape(), "objective_F");
    for (double v : x.values())
        if (!box.contains(v, 1e-12)) return kInf;
    double data = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) data += 0.5 * (x[i] - z[i]) * (x[i] - z[i]);
    if (nu == 0.0) return data;
    const FeatureMap Dx = conv_apply(D, x);
    double l1 = 0.0;
    for (double v : Dx.values()) l1 += std::abs(v);
    return data + nu * l1;
}

double inertia_t(int k, double a) { return (k + a - 1.0) / a; }

double inertia_rho(int k, double a) { return (inertia_t(k, a) - 1.0) / inertia_t(k + 1, a); }

SolverSchedule difb_schedule(double a, double normD, bool accelerated, int K)
{
    if (!(normD > 0.0)) throw ParameterError("difb_schedule: normD must be > 0");
    if (accelerated && !(a > 2.0)) throw ParameterError("difb_schedule: inertia parameter a must exceed 2");
    SolverSchedule s;
    s.regime = accelerated ? Regime::DiFB : Regime::DFB;
    s.inertia_a = accelerated ? a : 0.0;
    const double tau = (accelerated ? 0.99 : 1.99) / (normD * normD);
    for (int k = 1; k <= K; ++k) {
        s.tau.push_back(tau);
        s.rho.push_back(accelerated ? inertia_rho(k, a) : 0.0);
        s.mu.push_back(kInf);
        s.alpha.push_back(0.0);
    }
    return s;
}

SolverSchedule sccp_schedule(double mu0, double normD, bool accelerated, int K)
{
    if (!(mu0 > 0.0)) throw ParameterError("sccp_schedule: mu0 must be > 0");
    if (!(normD > 0.0)) throw ParameterError("sccp_schedule: normD must be > 0");
    SolverSchedule s;
    s.regime = accelerated ? Regime::ScCP : Regime::CP;
    double mu = mu0;
    double tau = 0.99 / (mu0 * normD * normD);
    for (int k = 0; k < K; ++k) {
        const double alpha = accelerated ? 1.0 / std::sqrt(1.0 + 2.0 * mu) : 1.0;
        s.tau.push_back(tau);
        s.mu.push_back(mu);
        s.alpha.push_back(alpha);
        s.rho.push_back(0.0);
        if (accelerated) {
            mu = alpha * mu;
            tau = tau / alpha;
        }
    }
    return s;
}

SolverSchedule ah_schedule(double mu, double normD, int K)
{
    SolverSchedule s = sccp_schedule(mu, normD, false, K);
    s.regime = Regime::AH;
    std::fill(s.alpha.begin(), s.alpha.end(), 0.0);
    return s;
}

Image primal_update(const Image& z, const Image& adj_u, const Image& x, double mu, const BoxConstraint& box)
{
    Image out(z.shape());
    if (std::isinf(mu)) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(z[i] - adj_u[i], box.lo, box.hi);
    } else {
        const double w = mu / (1.0 + mu);
        const double r = 1.0 / (1.0 + mu);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(w * (z[i] - adj_u[i]) + r * x[i], box.lo, box.hi);
    }
    return out;
}

SolverResult difb_solve(const Image& z, const ConvStack& D, const AdjointPolicy& policy, double nu,
                        const BoxConstraint& box, const SolverSchedule& schedule, int K, const SolveOptions& opts)
{
    require_tied(policy);
    box.validate();
    schedule.validate();
    if (schedule.regime != Regime::DFB && schedule.regime != Regime::DiFB)
        throw ContractError("difb_solve: schedule regime must be DFB or DiFB");
    if (schedule.length() < K) throw ContractError("difb_solve: schedule shorter than K");
    if (!(nu >= 0.0)) throw ParameterError("difb_solve: nu must be >= 0");

    SolverResult res;
    FeatureMap u(D.outputs(), z.height(), z.width());
    FeatureMap v = u;
    Image x = project_box(z, box);
    for (int k = 0; k < K; ++k) {
        const Image xv = project_box(lincomb(1.0, z, -1.0, conv_adjoint_apply(D, v)), box);
        const FeatureMap Dx = conv_apply(D, xv);
        FeatureMap u_next = hardtanh(lincomb(1.0, v, schedule.tau[k], Dx), nu);
        const double rho = schedule.rho[k];
        v = rho == 0.0 ? u_next : lincomb(1.0 + rho, u_next, -rho, u);
        Image x_next = project_box(lincomb(1.0, z, -1.0, conv_adjoint_apply(D, u_next)), box);
        const double change = relative_change(x_next, x);
        res.trace.objective.push_back(objective_F(x_next, z, D, nu, box));
        res.trace.primal_change.push_back(change);
        res.trace.dual_change.push_back(diff_norm(u_next.values(), u.values()));
        u = std::move(u_next);
        x = std::move(x_next);
        res.iterations = k + 1;
        if (change < opts.tol) break;
    }
    res.x = std::move(x);
    res.u = std::move(u);
    return res;
}

SolverResult sccp_solve(const Image& z, const ConvStack& D, const AdjointPolicy& policy, double nu,
                        const BoxConstraint& box, const SolverSchedule& schedule, int K, const SolveOptions& opts)
{
    require_tied(policy);
    box.validate();
    schedule.validate();
    if (schedule.regime != Regime::CP && schedule.regime != Regime::ScCP && schedule.regime != Regime::AH)
        throw ContractError("sccp_solve: schedule regime must be CP, ScCP or AH");
    if (schedule.length() < K) throw ContractError("sccp_solve: schedule shorter than K");
    if (!(nu >= 0.0)) throw ParameterError("sccp_solve: nu must be >= 0");

    SolverResult res;
    Image x = project_box(z, box);
    FeatureMap u(D.outputs(), z.height(), z.width());
    for (int k = 0; k < K; ++k) {
        Image x_next = primal_update(z, conv_adjoint_apply(D, u), x, schedule.mu[k], box);
        const double alpha = schedule.alpha[k];
        const Image extrapolated = lincomb(1.0 + alpha, x_next, -alpha, x);
        FeatureMap u_next = hardtanh(lincomb(1.0, u, schedule.tau[k], conv_apply(D, extrapolated)), nu);
        const double change = relative_change(x_next, x);
        res.trace.objective.push_back(objective_F(x_next, z, D, nu, box));
        res.trace.primal_change.push_back(change);
        res.trace.dual_change.push_back(diff_norm(u_next.values(), u.values()));
        x = std::move(x_next);
        u = std::move(u_next);
        res.iterations = k + 1;
        // From u_0 = 0 the first primal step reproduces x_0, so its change says nothing.
        if (k > 0 && change < opts.tol) break;
    }
    res.x = std::move(x);
    res.u = std::move(u);
    return res;
}

PrimalDualState ah_joint_step(const PrimalDualState& state, double tau, double mu, const Image& z, const ConvStack& D,
                              double nu, const BoxConstraint& box)
{
    if (!(mu > 0.0)) throw ParameterError("ah_joint_step: mu must be > 0 or +inf");
    PrimalDualState next;
    next.u = hardtanh(lincomb(1.0, state.u, tau, conv_apply(D, state.x)), nu);
    next.x = primal_update(z, conv_adjoint_apply(D, next.u), state.x, mu, box);
    next.x_prev = state.x;
    next.u_prev = state.u;
    next.k = state.k + 1;
    return next;
}

}  // namespace proxnn

#include "proxnn/robustness.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "json.hpp"
#include "proxnn/autodiff.hpp"
#include "proxnn/csv.hpp"
#include "proxnn/errors.hpp"
#include "proxnn/parallel.hpp"

namespace proxnn {

JacobianProbe make_probe(const PnnModel& model, const Image& z, double nu)
{
    ForwardOptions fo;
    fo.record_tape = true;
    auto tape = std::make_shared<Tape>(std::move(*pnn_forward(model, z, nu, fo).tape));
    const PnnModel* m = &model;
    JacobianProbe p;
    p.shape = z.shape();
    p.jvp = [m, tape](const Image& v) { return pnn_jvp_input(*m, *tape, v); };
    p.vjp = [m, tape](const Image& w) {
        VjpOptions vo;
        vo.params = false;
        return pnn_vjp(*m, *tape, w, std::nullopt, vo).grad_z;
    };
    return p;
}

JacobianProbe scaled_identity_probe(Shape shape, double scale)
{
    std::function<Image(const Image&)> f = [scale](const Image& v) { return scaled(v, scale); };
    return JacobianProbe{shape, f, f};
}

JacobianProbe diagonal_probe(Shape shape, std::vector<double> diag)
{
    if (diag.size() != shape.size()) throw ShapeError("diagonal_probe: diagonal length does not match shape");
    auto d = std::make_shared<std::vector<double>>(std::move(diag));
    std::function<Image(const Image&)> f = [d](const Image& v) {
        Image out = v;
        for (std::size_t i = 0; i < out.size(); ++i) out[i] *= (*d)[i];
        return out;
    };
    return JacobianProbe{shape, f, f};
}

JacobianProbe reflected_probe(const JacobianProbe& f)
{
    auto jvp = f.jvp;
    auto vjp = f.vjp;
    return {f.shape, [jvp](const Image& v) { return lincomb(2.0, jvp(v), -1.0, v); },
            [vjp](const Image& w) { return lincomb(2.0, vjp(w), -1.0, w); }};
}

Image jacobian_apply(const JacobianProbe& probe, const Image& v)
{
    require_same_shape(v.shape(), probe.shape, "jacobian_apply");
    return probe.jvp(v);
}

Image jacobian_adjoint_apply(const JacobianProbe& probe, const Image& w)
{
    require_same_shape(w.shape(), probe.shape, "jacobian_adjoint_apply");
    return probe.vjp(w);
}

SpectralNormResult jacobian_spectral_norm(const JacobianProbe& probe, const JacobianNormOptions& opts)
{
    const Shape s = probe.shape;
    LinearOperator op;
    op.in_size = op.out_size = s.size();
    op.apply = [&](std::span<const double> in, std::span<double> out) {
        const Image r = probe.jvp(Image(s, std::vector<double>(in.begin(), in.end())));
        std::copy(r.values().begin(), r.values().end(), out.begin());
    };
    op.adjoint = [&](std::span<const double> in, std::span<double> out) {
        const Image r = probe.vjp(Image(s, std::vector<double>(in.begin(), in.end())));
        std::copy(r.values().begin(), r.values().end(), out.begin());
    };
    SpectralNormOptions so;
    so.tol = opts.tol;
    so.max_iter = opts.max_iter;
    so.seed = opts.seed;
    return spectral_norm(op, so);
}

namespace {

double quantile(const std::vector<double>& sorted, double q)
{
    if (sorted.empty()) return 0.0;
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

RobustnessReport run_report(const PnnModel& model, const std::vector<Sample>& samples, const JacobianNormOptions& opts,
                            TargetMap target)
{
    if (samples.empty()) throw ParameterError("robustness report needs at least one sample");
    std::vector<double> norms(samples.size());
    std::vector<bool> conv(samples.size());
    std::vector<std::uint8_t> conv_flags(samples.size());
    parallel_for(samples.size(), [&](std::size_t i) {
        const Sample& s = samples[i];
        JacobianProbe p = make_probe(model, s.noisy, s.sigma * s.sigma);
        if (target == TargetMap::H) p = reflected_probe(p);
        const SpectralNormResult r = jacobian_spectral_norm(p, opts);
        norms[i] = r.norm;
        conv_flags[i] = r.converged;
    });
    for (std::size_t i = 0; i < conv.size(); ++i) conv[i] = conv_flags[i] != 0;
    return summarize(target, std::move(norms), std::move(conv));
}

}  // namespace

RobustnessReport summarize(TargetMap target, std::vector<double> norms, std::vector<bool> converged)
{
    RobustnessReport r;
    r.target = target;
    r.norms = std::move(norms);
    r.converged = converged.empty() ? std::vector<bool>(r.norms.size(), true) : std::move(converged);
    std::vector<double> sorted = r.norms;
    std::sort(sorted.begin(), sorted.end());
    if (!sorted.empty()) r.max = sorted.back();
    r.median = quantile(sorted, 0.5);
    r.q1 = quantile(sorted, 0.25);
    r.q3 = quantile(sorted, 0.75);
    return r;
}

std::string RobustnessReport::csv() const
{
    CsvTable t({"sample", "norm"});
    for (std::size_t i = 0; i < norms.size(); ++i) t.add_row({static_cast<double>(i), norms[i]});
    return t.str();
}

std::string RobustnessReport::json() const
{
    nlohmann::json j;
    j["target"] = target == TargetMap::F ? "f" : "h";
    j["count"] = norms.size();
    j["max"] = max;
    j["median"] = median;
    j["q1"] = q1;
    j["q3"] = q3;
    return j.dump(2) + "\n";
}

RobustnessReport lipschitz_estimate(const PnnModel& model, const std::vector<Sample>& samples,
                                    const JacobianNormOptions& opts)
{
    return run_report(model, samples, opts, TargetMap::F);
}

RobustnessReport nonexpansiveness_score(const PnnModel& model, const std::vector<Sample>& samples,
                                        const JacobianNormOptions& opts)
{
    return run_report(model, samples, opts, TargetMap::H);
}

namespace {

// Views into a stacked vector of images and feature maps.
struct Stack {
    std::vector<std::size_t> offsets;
    std::vector<std::size_t> sizes;
    std::size_t total = 0;

    explicit Stack(std::initializer_list<std::size_t> parts)
    {
        for (std::size_t s : parts) {
            offsets.push_back(total);
            sizes.push_back(s);
            total += s;
        }
    }
    std::span<const double> get(std::span<const double> v, int i) const { return v.subspan(offsets[i], sizes[i]); }
    std::span<double> get(std::span<double> v, int i) const { return v.subspan(offsets[i], sizes[i]); }
};

void axpy(double a, std::span<const double> x, std::span<double> y)
{
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

double op_norm(const LinearOperator& op, const ProductBoundOptions& o, std::uint64_t stream)
{
    SpectralNormOptions so;
    so.tol = o.tol;
    so.max_iter = o.max_iter;
    so.seed = o.seed + stream;
    return spectral_norm(op, so).norm;
}

}  // namespace

double lipschitz_product_bound(const PnnModel& model, const ProductBoundOptions& opts)
{
    model.validate();
    const int h = opts.height > 0 ? opts.height : model.norm_settings.height;
    const int w = opts.width > 0 ? opts.width : model.norm_settings.width;
    const std::size_t nx = static_cast<std::size_t>(model.C) * h * w;
    const std::size_t nu = static_cast<std::size_t>(model.J) * h * w;
    const bool dual_skip = model.arch == ArchKind::DDiFB;
    const bool primal_skip = model.arch == ArchKind::DCP || model.arch == ArchKind::DScCP;
    const auto coeffs = layer_coefficients(model);

    auto D = [&](const ConvStack& k, std::span<const double> x, std::span<double> out) {
        detail::correlate_accumulate(k.values(), k.outputs(), k.inputs(), 3, 3, x, h, w, out);
    };
    auto Dt = [&](const ConvStack& k, std::span<const double> u, std::span<double> out) {
        detail::correlate_transpose_accumulate(k.values(), k.outputs(), k.inputs(), 3, 3, u, h, w, out);
    };
    // The primal adjoint as a FeatureMap -> Image stack.
    auto adjoint_stack = [](const PnnLayerParams& l) {
        return l.adjoint.mode == AdjointMode::Tied ? l.forward.transposed() : *l.adjoint.untied;
    };

    // E: z -> (z, D_1 z, z)
    const ConvStack& D1 = model.layers.front().forward;
    LinearOperator E;
    E.in_size = nx;
    E.out_size = 2 * nx + nu;
    E.apply = [&](std::span<const double> z, std::span<double> out) {
        std::fill(out.begin(), out.end(), 0.0);
        std::copy(z.begin(), z.end(), out.begin());
        D(D1, z, out.subspan(nx, nu));
        std::copy(z.begin(), z.end(), out.begin() + static_cast<std::ptrdiff_t>(nx + nu));
    };
    E.adjoint = [&](std::span<const double> in, std::span<double> out) {
        std::fill(out.begin(), out.end(), 0.0);
        axpy(1.0, in.subspan(0, nx), out);
        Dt(D1, in.subspan(nx, nu), out);
        axpy(1.0, in.subspan(nx + nu, nx), out);
    };
    double bound = op_norm(E, opts, 0);

    for (int k = 0; k < model.K && bound > 0.0; ++k) {
        const PnnLayerParams& layer = model.layers[k];
        const LayerCoefficients& c = coeffs[k];
        const ConvStack P = adjoint_stack(layer);
        const Stack in3{nx, nu, nx};           // (x, u, z)
        const Stack out4{nx, nu, nx, nu};      // (x, u, z, a) and (x, u, z, u~)
        const Stack out4p{nx, nu, nx, nx};     // (x, u', z, b) and (x, u', z, x~)

        // A: (x, u, z) -> (x, u, z, u + tau D x)
        LinearOperator A;
        A.in_size = in3.total;
        A.out_size = out4.total;
        A.apply = [&](std::span<const double> in, std::span<double> out) {
            std::fill(out.begin(), out.end(), 0.0);
            std::copy(in.begin(), in.end(), out.begin());
            auto a = out4.get(out, 3);
            axpy(1.0, in3.get(in, 1), a);
            if (c.tau != 0.0) {
                std::vector<double> t(nu, 0.0);
                D(layer.forward, in3.get(in, 0), t);
                axpy(c.tau, t, a);
            }
        };
        A.adjoint = [&](std::span<const double> in, std::span<double> out) {
            std::fill(out.begin(), out.end(), 0.0);
            std::copy(in.begin(), in.begin() + static_cast<std::ptrdiff_t>(in3.total), out.begin());
            auto a = out4.get(in, 3);
            axpy(1.0, a, in3.get(out, 1));
            if (c.tau != 0.0) {
                std::vector<double> t(nx, 0.0);
                Dt(layer.forward, a, t);
                axpy(c.tau, t, in3.get(out, 0));
            }
        };

        // B: (x, u, z, u~) -> (x, u', z, b)
        const bool inf_mu = std::isinf(c.mu);
        const double s = inf_mu ? 1.0 : c.mu / (1.0 + c.mu);
        const double r = inf_mu ? 0.0 : 1.0 / (1.0 + c.mu);
        const double rho = dual_skip ? c.rho : 0.0;
        LinearOperator B;
        B.in_size = out4.total;
        B.out_size = out4p.total;
        B.apply = [&, s, r, rho](std::span<const double> in, std::span<double> out) {
            std::fill(out.begin(), out.end(), 0.0);
            auto x = out4.get(in, 0);
            auto u = out4.get(in, 1);
            auto z = out4.get(in, 2);
            auto ut = out4.get(in, 3);
            axpy(1.0, x, out4p.get(out, 0));
            axpy(1.0 + rho, ut, out4p.get(out, 1));
            axpy(-rho, u, out4p.get(out, 1));
            axpy(1.0, z, out4p.get(out, 2));
            auto b = out4p.get(out, 3);
            std::vector<double> t(nx, 0.0);
            D(P, ut, t);
            axpy(s, z, b);
            axpy(-s, t, b);
            axpy(r, x, b);
        };
        B.adjoint = [&, s, r, rho](std::span<const double> in, std::span<double> out) {
            std::fill(out.begin(), out.end(), 0.0);
            auto gx = out4p.get(in, 0);
            auto gu = out4p.get(in, 1);
            auto gz = out4p.get(in, 2);
            auto gb = out4p.get(in, 3);
            axpy(1.0, gx, out4.get(out, 0));
            axpy(r, gb, out4.get(out, 0));
            axpy(-rho, gu, out4.get(out, 1));
            axpy(1.0, gz, out4.get(out, 2));
            axpy(s, gb, out4.get(out, 2));
            auto gut = out4.get(out, 3);
            axpy(1.0 + rho, gu, gut);
            std::vector<double> t(nu, 0.0);
            Dt(P, gb, t);
            axpy(-s, t, gut);
        };

        // C: (x, u', z, x~) -> ((1 + alpha) x~ - alpha x, u', z)
        const double alpha = primal_skip ? c.alpha : 0.0;
        LinearOperator Cop;
        Cop.in_size = out4p.total;
        Cop.out_size = in3.total;
        Cop.apply = [&, alpha](std::span<const double> in, std::span<double> out) {
            std::fill(out.begin(), out.end(), 0.0);
            auto x = in3.get(out, 0);
            axpy(1.0 + alpha, out4p.get(in, 3), x);
            axpy(-alpha, out4p.get(in, 0), x);
            axpy(1.0, out4p.get(in, 1), in3.get(out, 1));
            axpy(1.0, out4p.get(in, 2), in3.get(out, 2));
        };
        Cop.adjoint = [&, alpha](std::span<const double> in, std::span<double> out) {
            std::fill(out.begin(), out.end(), 0.0);
            auto gx = in3.get(in, 0);
            axpy(1.0 + alpha, gx, out4p.get(out, 3));
            axpy(-alpha, gx, out4p.get(out, 0));
            axpy(1.0, in3.get(in, 1), out4p.get(out, 1));
            axpy(1.0, in3.get(in, 2), out4p.get(out, 2));
        };

        const auto stream = static_cast<std::uint64_t>(3 * k + 1);
        bound *= op_norm(A, opts, stream) * op_norm(B, opts, stream + 1) * op_norm(Cop, opts, stream + 2);
    }
    return bound;
}

}  // namespace proxnn

#include "proxnn/autodiff.hpp"

#include <cmath>

#include "proxnn/image.hpp"
#include "proxnn/parallel.hpp"
#include "proxnn/rng.hpp"

namespace proxnn {

namespace {

bool dual_skip(ArchKind a) { return a == ArchKind::DDiFB; }
bool primal_skip(ArchKind a) { return a == ArchKind::DCP || a == ArchKind::DScCP; }

void check_tape(const PnnModel& model, const Tape& tape)
{
    if (tape.model != &model || static_cast<int>(tape.layers.size()) != model.K)
        throw ContractError("tape was not recorded by pnn_forward on this model");
}

/// Transposed application of a layer's adjoint operator: Image -> FeatureMap.
FeatureMap adjoint_transpose(const PnnLayerParams& layer, const Image& w)
{
    if (layer.adjoint.mode == AdjointMode::Tied) return conv_apply(layer.forward, w);
    const ConvStack& E = *layer.adjoint.untied;
    FeatureMap out(E.inputs(), w.height(), w.width());
    detail::correlate_transpose_accumulate(E.values(), E.outputs(), E.inputs(), 3, 3, w.values(), w.height(),
                                           w.width(), out.values());
    return out;
}

double dalpha_dmu(double mu) { return -std::pow(1.0 + 2.0 * mu, -1.5); }

}  // namespace

VjpResult pnn_vjp(const PnnModel& model, const Tape& tape, const Image& cot_x, const std::optional<FeatureMap>& cot_u,
                  const VjpOptions& opts)
{
    check_tape(model, tape);
    const Image& z = tape.z;
    require_same_shape(cot_x.shape(), z.shape(), "pnn_vjp cotangent");
    const Shape dual_shape{model.J, z.height(), z.width()};

    const auto layout = param_layout(model);
    std::vector<std::size_t> fwd_off(model.K), adj_off(model.K);
    std::size_t mu_off = 0;
    {
        std::size_t s = 0;
        for (int k = 0; k < model.K; ++k) {
            fwd_off[k] = layout[s++].offset;
            if (model.variant == VariantKind::LFO) adj_off[k] = layout[s++].offset;
        }
        if (s < layout.size()) mu_off = layout[s].offset;
    }

    VjpResult res;
    if (opts.params) res.grads.values.assign(static_cast<std::size_t>(learnable_count(model)), 0.0);
    std::vector<double>& g = res.grads.values;
    auto kernel_grad = [&](std::size_t off, std::size_t len) { return std::span<double>(g).subspan(off, len); };

    std::vector<double> gtau(model.K, 0.0), gmu(model.K, 0.0), galpha(model.K, 0.0);
    Image gz(z.shape());
    Image gx = cot_x;
    FeatureMap gu = cot_u ? *cot_u : FeatureMap(dual_shape);
    require_same_shape(gu.shape(), dual_shape, "pnn_vjp dual cotangent");

    for (int k = model.K - 1; k >= 0; --k) {
        const LayerRecord& rec = tape.layers[k];
        const PnnLayerParams& layer = model.layers[k];
        const LayerCoefficients& c = rec.coeff;

        Image gx_prev(z.shape());
        FeatureMap gu_prev(dual_shape);

        Image gxt = gx;
        if (primal_skip(model.arch)) {
            for (std::size_t i = 0; i < gx.size(); ++i) {
                gxt[i] = (1.0 + c.alpha) * gx[i];
                gx_prev[i] -= c.alpha * gx[i];
                galpha[k] += gx[i] * (rec.x_tilde[i] - rec.x_prev[i]);
            }
        }
        FeatureMap gut = gu;
        if (dual_skip(model.arch)) {
            for (std::size_t i = 0; i < gu.size(); ++i) {
                gut[i] = (1.0 + c.rho) * gu[i];
                gu_prev[i] -= c.rho * gu[i];
            }
        }

        Image gw(z.shape());
        if (std::isinf(c.mu)) {
            for (std::size_t i = 0; i < gw.size(); ++i) {
                const double gb = rec.primal_mask[i] ? gxt[i] : 0.0;
                gz[i] += gb;
                gw[i] = -gb;
            }
        } else {
            const double s = c.mu / (1.0 + c.mu);
            const double r = 1.0 / (1.0 + c.mu);
            const double ds = 1.0 / ((1.0 + c.mu) * (1.0 + c.mu));
            for (std::size_t i = 0; i < gw.size(); ++i) {
                const double gb = rec.primal_mask[i] ? gxt[i] : 0.0;
                gz[i] += s * gb;
                gw[i] = -s * gb;
                gx_prev[i] += r * gb;
                gmu[k] += gb * (z[i] - rec.adj_u[i] - rec.x_prev[i]) * ds;
            }
        }

        // w = adjoint(u~)
        const FeatureMap back = adjoint_transpose(layer, gw);
        for (std::size_t i = 0; i < gut.size(); ++i) gut[i] += back[i];
        if (opts.params) {
            if (layer.adjoint.mode == AdjointMode::Tied)
                conv_kernel_gradient(gw, rec.u_tilde, 1.0, kernel_grad(fwd_off[k], layer.forward.size()));
            else
                conv_kernel_gradient(rec.u_tilde, gw, 1.0, kernel_grad(adj_off[k], layer.adjoint.untied->size()));
        }

        // u~ = clip(u_prev + tau D x_prev)
        FeatureMap ga(dual_shape);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] = rec.dual_mask[i] ? gut[i] : 0.0;
        for (std::size_t i = 0; i < ga.size(); ++i) gu_prev[i] += ga[i];
        if (c.tau != 0.0) {
            const Image back_x = conv_adjoint_apply(layer.forward, ga);
            for (std::size_t i = 0; i < gx_prev.size(); ++i) gx_prev[i] += c.tau * back_x[i];
        }
        if (opts.params) {
            conv_kernel_gradient(rec.x_prev, ga, c.tau, kernel_grad(fwd_off[k], layer.forward.size()));
            gtau[k] = dot(ga, rec.dx_prev);
        }

        gx = std::move(gx_prev);
        gu = std::move(gu_prev);
    }

    for (std::size_t i = 0; i < gz.size(); ++i) gz[i] += gx[i];
    const PnnLayerParams& first = model.layers.front();
    if (tape.dual_from_z) {
        const Image back = conv_adjoint_apply(first.forward, gu);
        for (std::size_t i = 0; i < gz.size(); ++i) gz[i] += back[i];
        if (opts.params) conv_kernel_gradient(z, gu, 1.0, kernel_grad(fwd_off[0], first.forward.size()));
    } else {
        res.grad_initial_dual = gu;
    }
    res.grad_z = std::move(gz);
    if (!opts.params) return res;

    // Scalar chains: tau_k (LNO norms, mu) and the mu parameterization.
    const bool lno = model.variant == VariantKind::LNO;
    if (lno) {
        for (int k = 0; k < model.K; ++k) {
            const PnnLayerParams& layer = model.layers[k];
            const double sigma = layer.norm;
            const double tau = tape.layers[k].coeff.tau;
            if (opts.stop_norm_gradient || sigma <= 0.0 || gtau[k] == 0.0) continue;
            const double gsigma = gtau[k] * (-2.0 * tau / sigma);
            const Shape ns{model.C, model.norm_settings.height, model.norm_settings.width};
            const Image v1(ns, layer.right_vector);
            const FeatureMap u1(Shape{model.J, ns.height, ns.width}, layer.left_vector);
            conv_kernel_gradient(v1, u1, gsigma, kernel_grad(fwd_off[k], layer.forward.size()));
        }
    }
    const bool override_inertia = tape.inertia_override.has_value();
    if (model.arch == ArchKind::DCP) {
        const double mu = std::exp(model.log_mu[0]);
        double total = 0.0;
        for (int k = 0; k < model.K; ++k) {
            total += gmu[k];
            if (lno) total += gtau[k] * (-tape.layers[k].coeff.tau / mu);
        }
        g[mu_off] += total * mu;
    } else if (model.arch == ArchKind::DScCP && lno) {
        for (int k = 0; k < model.K; ++k) {
            const double mu = tape.layers[k].coeff.mu;
            double total = gmu[k] + gtau[k] * (-tape.layers[k].coeff.tau / mu);
            if (!override_inertia) total += galpha[k] * dalpha_dmu(mu);
            g[mu_off + k] += total * mu;
        }
    } else if (model.arch == ArchKind::DScCP) {
        // mu_{k+1} = alpha(mu_k) mu_k, starting from mu_0 = exp(log_mu).
        double carry = 0.0;
        for (int k = model.K - 1; k >= 0; --k) {
            const double mu = tape.layers[k].coeff.mu;
            const double alpha = tape.layers[k].coeff.alpha;
            double total = gmu[k];
            double dnext;
            if (override_inertia) {
                dnext = alpha;
            } else {
                total += galpha[k] * dalpha_dmu(mu);
                dnext = alpha + mu * dalpha_dmu(mu);
            }
            carry = total + carry * dnext;
        }
        g[mu_off] += carry * std::exp(model.log_mu[0]);
    }
    return res;
}

Image pnn_jvp_input(const PnnModel& model, const Tape& tape, const Image& v)
{
    check_tape(model, tape);
    require_same_shape(v.shape(), tape.z.shape(), "pnn_jvp_input");
    const Shape dual_shape{model.J, v.height(), v.width()};
    Image dx = v;
    FeatureMap du = tape.dual_from_z ? conv_apply(model.layers.front().forward, v) : FeatureMap(dual_shape);
    for (int k = 0; k < model.K; ++k) {
        const LayerRecord& rec = tape.layers[k];
        const PnnLayerParams& layer = model.layers[k];
        const LayerCoefficients& c = rec.coeff;
        const FeatureMap Ddx = conv_apply(layer.forward, dx);
        FeatureMap dut(dual_shape);
        for (std::size_t i = 0; i < dut.size(); ++i) dut[i] = rec.dual_mask[i] ? du[i] + c.tau * Ddx[i] : 0.0;
        const Image dw = conv_adjoint_apply(layer.forward, layer.adjoint, dut);
        Image dxt(v.shape());
        if (std::isinf(c.mu)) {
            for (std::size_t i = 0; i < dxt.size(); ++i) dxt[i] = rec.primal_mask[i] ? v[i] - dw[i] : 0.0;
        } else {
            const double s = c.mu / (1.0 + c.mu);
            const double r = 1.0 / (1.0 + c.mu);
            for (std::size_t i = 0; i < dxt.size(); ++i)
                dxt[i] = rec.primal_mask[i] ? s * (v[i] - dw[i]) + r * dx[i] : 0.0;
        }
        FeatureMap du_next = dual_skip(model.arch) ? lincomb(1.0 + c.rho, dut, -c.rho, du) : dut;
        Image dx_next = primal_skip(model.arch) ? lincomb(1.0 + c.alpha, dxt, -c.alpha, dx) : dxt;
        dx = std::move(dx_next);
        du = std::move(du_next);
    }
    return dx;
}

LossResult loss_and_grad(const PnnModel& model, const std::vector<Sample>& batch, const VjpOptions& opts)
{
    if (batch.empty()) throw ParameterError("loss_and_grad: empty batch");
    const Shape shape = batch.front().clean.shape();
    for (const auto& s : batch) {
        require_same_shape(s.clean.shape(), shape, "loss_and_grad batch");
        require_same_shape(s.noisy.shape(), shape, "loss_and_grad batch");
    }
    struct PerSample {
        double loss = 0.0;
        double psnr = 0.0;
        std::vector<double> grad;
    };
    std::vector<PerSample> parts(batch.size());
    parallel_for(batch.size(), [&](std::size_t i) {
        const Sample& s = batch[i];
        ForwardOptions fo;
        fo.record_tape = true;
        ForwardResult fr = pnn_forward(model, s.noisy, s.sigma * s.sigma, fo);
        Image cot(shape);
        double loss = 0.0;
        for (std::size_t j = 0; j < cot.size(); ++j) {
            cot[j] = fr.x[j] - s.clean[j];
            loss += 0.5 * cot[j] * cot[j];
        }
        VjpResult vr = pnn_vjp(model, *fr.tape, cot, std::nullopt, opts);
        parts[i] = PerSample{loss, psnr(s.clean, fr.x), std::move(vr.grads.values)};
    });
    LossResult out;
    out.grads.values.assign(parts.front().grad.size(), 0.0);
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (const auto& p : parts) {
        out.loss += p.loss;
        out.mean_psnr += std::isinf(p.psnr) ? 100.0 : p.psnr;
        for (std::size_t j = 0; j < p.grad.size(); ++j) out.grads.values[j] += p.grad[j];
    }
    out.loss *= inv;
    out.mean_psnr *= inv;
    for (double& v : out.grads.values) v *= inv;
    return out;
}

namespace {

struct Probe {
    double value = 0.0;
    std::vector<std::uint8_t> masks;
};

Probe probe(const PnnModel& model, const Image& z, double nu, const Image& c)
{
    ForwardOptions fo;
    fo.record_tape = true;
    const ForwardResult fr = pnn_forward(model, z, nu, fo);
    Probe p;
    p.value = dot(c, fr.x);
    for (const auto& rec : fr.tape->layers) {
        p.masks.insert(p.masks.end(), rec.dual_mask.begin(), rec.dual_mask.end());
        p.masks.insert(p.masks.end(), rec.primal_mask.begin(), rec.primal_mask.end());
    }
    return p;
}

}  // namespace

GradCheckReport grad_check(const PnnModel& model, const Image& z, double nu, const GradCheckOptions& opts)
{
    if (!(opts.fd_step > 0.0)) throw ParameterError("grad_check: fd step must be > 0");
    Rng rng(opts.seed);
    Image c(z.shape());
    for (double& v : c.values()) v = rng.normal();

    ForwardOptions fo;
    fo.record_tape = true;
    const ForwardResult base = pnn_forward(model, z, nu, fo);
    VjpOptions vo;
    vo.stop_norm_gradient = opts.stop_norm_gradient;
    const VjpResult analytic = pnn_vjp(model, *base.tape, c, std::nullopt, vo);
    const Probe base_probe = probe(model, z, nu, c);

    GradCheckReport report;
    auto compare = [&](double a, double fd) {
        const double denom = std::max({std::abs(a), std::abs(fd), opts.abs_floor});
        report.max_rel_error = std::max(report.max_rel_error, std::abs(a - fd) / denom);
        ++report.checked;
    };

    const std::vector<double> params = flatten_params(model);
    const std::size_t n_params = params.size();
    const double h = opts.fd_step;
    for (int t = 0; t < opts.coordinates && n_params > 0; ++t) {
        const auto idx = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(n_params) - 1));
        PnnModel plus = model, minus = model;
        std::vector<double> p = params;
        p[idx] = params[idx] + h;
        assign_params(plus, p);
        p[idx] = params[idx] - h;
        assign_params(minus, p);
        const Probe fp = probe(plus, z, nu, c);
        const Probe fm = probe(minus, z, nu, c);
        if (fp.masks != base_probe.masks || fm.masks != base_probe.masks) {
            ++report.skipped;
            continue;
        }
        compare(analytic.grads.values[idx], (fp.value - fm.value) / (2.0 * h));
    }
    for (int t = 0; t < opts.input_coordinates; ++t) {
        const auto idx = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(z.size()) - 1));
        Image zp = z, zm = z;
        zp[idx] += h;
        zm[idx] -= h;
        const Probe fp = probe(model, zp, nu, c);
        const Probe fm = probe(model, zm, nu, c);
        if (fp.masks != base_probe.masks || fm.masks != base_probe.masks) {
            ++report.skipped;
            continue;
        }
        compare(analytic.grad_z[idx], (fp.value - fm.value) / (2.0 * h));
    }
    return report;
}

}  // namespace proxnn

#include "proxnn/pnn.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>

#include "proxnn/rng.hpp"
#include "proxnn/solvers.hpp"

namespace proxnn {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

std::string lower(std::string s)
{
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

bool has_dual_skip(ArchKind a) { return a == ArchKind::DDiFB; }
bool has_primal_skip(ArchKind a) { return a == ArchKind::DCP || a == ArchKind::DScCP; }

/// tau = c / sigma^2, with the degenerate zero operator mapped to tau = 0.
double normalized_step(double c, double sigma) { return sigma > 0.0 ? c / (sigma * sigma) : 0.0; }
}  // namespace

std::string to_string(ArchKind a)
{
    switch (a) {
    case ArchKind::DDFB: return "DDFB";
    case ArchKind::DDiFB: return "DDiFB";
    case ArchKind::DCP: return "DCP";
    case ArchKind::DScCP: return "DScCP";
    }
    return "?";
}

std::string to_string(VariantKind v) { return v == VariantKind::LNO ? "LNO" : "LFO"; }

ArchKind parse_arch(const std::string& s)
{
    const std::string l = lower(s);
    if (l == "ddfb") return ArchKind::DDFB;
    if (l == "ddifb") return ArchKind::DDiFB;
    if (l == "dcp") return ArchKind::DCP;
    if (l == "dsccp") return ArchKind::DScCP;
    throw ParameterError("unknown architecture '" + s + "' (expected ddfb, ddifb, dcp or dsccp)");
}

VariantKind parse_variant(const std::string& s)
{
    const std::string l = lower(s);
    if (l == "lno") return VariantKind::LNO;
    if (l == "lfo") return VariantKind::LFO;
    throw ParameterError("unknown variant '" + s + "' (expected lno or lfo)");
}

int scalar_count(ArchKind arch, VariantKind variant, int K)
{
    switch (arch) {
    case ArchKind::DDFB:
    case ArchKind::DDiFB: return 0;
    case ArchKind::DCP: return 1;
    case ArchKind::DScCP: return variant == VariantKind::LNO ? K : 1;
    }
    return 0;
}

long long param_count(ArchKind arch, VariantKind variant, int K, int J, int C)
{
    const long long conv = 9LL * K * J * C * (variant == VariantKind::LFO ? 2 : 1);
    long long scalars = 0;
    switch (arch) {
    case ArchKind::DDFB: scalars = 0; break;
    case ArchKind::DDiFB: scalars = variant == VariantKind::LFO ? 1 : 0; break;
    case ArchKind::DCP: scalars = 1; break;
    case ArchKind::DScCP: scalars = variant == VariantKind::LFO ? 2LL * K : K; break;
    }
    return conv + scalars;
}

long long learnable_count(const PnnModel& model)
{
    long long n = 0;
    for (const auto& l : model.layers) {
        n += static_cast<long long>(l.forward.size());
        if (l.adjoint.untied) n += static_cast<long long>(l.adjoint.untied->size());
    }
    return n + static_cast<long long>(model.log_mu.size());
}

void PnnModel::validate() const
{
    if (K <= 0 || J <= 0 || C <= 0) throw ShapeError("model: K, J and C must be positive");
    if (static_cast<int>(layers.size()) != K)
        throw ShapeError("model: expected " + std::to_string(K) + " layers, found " + std::to_string(layers.size()));
    for (const auto& l : layers) {
        if (l.forward.outputs() != J || l.forward.inputs() != C) throw ShapeError("model: layer stack must be J x C");
        l.adjoint.validate(l.forward);
        if ((variant == VariantKind::LNO) != (l.adjoint.mode == AdjointMode::Tied))
            throw ContractError("model: LNO layers use tied adjoints, LFO layers untied ones");
    }
    if (static_cast<int>(log_mu.size()) != scalar_count(arch, variant, K))
        throw ContractError("model: wrong number of step scalars for " + to_string(arch) + "-" + to_string(variant));
    for (double v : log_mu)
        if (!std::isfinite(v)) throw DomainError("model: non-finite step scalar");
    if (arch == ArchKind::DDiFB && !(inertia_a > 2.0)) throw ParameterError("model: inertia parameter must exceed 2");
    box.validate();
}

namespace {
void refresh_layer_norm(PnnLayerParams& layer, const NormSettings& ns, bool warm)
{
    const LinearOperator op = make_conv_operator(layer.forward, AdjointPolicy::tied(), ns.height, ns.width);
    SpectralNormOptions opts;
    opts.tol = ns.tol;
    opts.max_iter = ns.max_iter;
    opts.seed = ns.seed;
    if (warm && layer.right_vector.size() == op.in_size && norm2(layer.right_vector) > 0.0)
        opts.warm_start = layer.right_vector;
    SpectralNormResult r = leading_singular_triple(op, opts);
    layer.norm = r.norm;
    layer.left_vector = std::move(r.left);
    layer.right_vector = std::move(r.right);
}
}  // namespace

void PnnModel::refresh_norms()
{
    if (variant != VariantKind::LNO) return;
    for (auto& l : layers) refresh_layer_norm(l, norm_settings, true);
}

void PnnModel::refresh_norms_cold()
{
    if (variant != VariantKind::LNO) return;
    for (auto& l : layers) refresh_layer_norm(l, norm_settings, false);
}

PnnModel make_model(ArchKind arch, VariantKind variant, int K, int J, int C, std::uint64_t seed, NormSettings norms)
{
    PnnModel m;
    m.arch = arch;
    m.variant = variant;
    m.K = K;
    m.J = J;
    m.C = C;
    m.norm_settings = norms;
    for (int k = 0; k < K; ++k) {
        PnnLayerParams layer;
        layer.forward = random_stack(J, C, 1.0 / std::sqrt(9.0 * C), Rng::derive_seed(seed, 2 * k));
        if (variant == VariantKind::LFO)
            layer.adjoint = AdjointPolicy::with_untied(
                random_stack(C, J, 1.0 / std::sqrt(9.0 * J), Rng::derive_seed(seed, 2 * k + 1)));
        m.layers.push_back(std::move(layer));
    }
    m.log_mu.assign(scalar_count(arch, variant, K), 0.0);
    m.validate();
    m.refresh_norms_cold();
    return m;
}

PnnModel make_tied_model(ArchKind arch, int K, const ConvStack& D, double mu0, NormSettings norms)
{
    if (!(mu0 > 0.0)) throw ParameterError("make_tied_model: mu0 must be > 0");
    PnnModel m;
    m.arch = arch;
    m.variant = VariantKind::LNO;
    m.K = K;
    m.J = D.outputs();
    m.C = D.inputs();
    m.norm_settings = norms;
    PnnLayerParams layer;
    layer.forward = D;
    refresh_layer_norm(layer, norms, false);
    m.layers.assign(K, layer);
    if (arch == ArchKind::DCP) m.log_mu = {std::log(mu0)};
    if (arch == ArchKind::DScCP) {
        double mu = mu0;
        for (int k = 0; k < K; ++k) {
            m.log_mu.push_back(std::log(mu));
            mu = mu / std::sqrt(1.0 + 2.0 * mu);
        }
    }
    m.validate();
    return m;
}

std::vector<LayerCoefficients> layer_coefficients(const PnnModel& model, std::optional<double> inertia_override)
{
    const bool lno = model.variant == VariantKind::LNO;
    std::vector<LayerCoefficients> out(model.K);
    double chained_mu = model.arch == ArchKind::DScCP && !lno ? std::exp(model.log_mu.at(0)) : 0.0;
    for (int k = 0; k < model.K; ++k) {
        const double sigma = model.layers[k].norm;
        LayerCoefficients& c = out[k];
        switch (model.arch) {
        case ArchKind::DDFB:
            c.tau = lno ? normalized_step(1.99, sigma) : 1.0;
            c.mu = kInf;
            break;
        case ArchKind::DDiFB:
            c.tau = lno ? normalized_step(0.99, sigma) : 1.0;
            c.mu = kInf;
            c.rho = inertia_override ? *inertia_override : inertia_rho(k + 1, model.inertia_a);
            break;
        case ArchKind::DCP: {
            const double mu = std::exp(model.log_mu.at(0));
            c.mu = mu;
            c.tau = lno ? normalized_step(0.99, sigma) / mu : 1.0;
            c.alpha = 1.0;
            break;
        }
        case ArchKind::DScCP:
            if (lno) {
                c.mu = std::exp(model.log_mu.at(k));
                c.alpha = inertia_override ? *inertia_override : 1.0 / std::sqrt(1.0 + 2.0 * c.mu);
                c.tau = normalized_step(0.99, sigma) / c.mu;
            } else {
                c.mu = chained_mu;
                c.alpha = inertia_override ? *inertia_override : 1.0 / std::sqrt(1.0 + 2.0 * chained_mu);
                c.tau = 1.0;
                chained_mu = c.alpha * chained_mu;
            }
            break;
        }
    }
    return out;
}

namespace {

FeatureMap dual_preactivation(const FeatureMap& u, const FeatureMap& Dx, double tau)
{
    FeatureMap a(u.shape());
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = u[i] + tau * Dx[i];
    return a;
}

Image primal_preactivation(const Image& z, const Image& adj, const Image& x, double mu)
{
    Image b(z.shape());
    if (std::isinf(mu)) {
        for (std::size_t i = 0; i < b.size(); ++i) b[i] = z[i] - adj[i];
    } else {
        const double w = mu / (1.0 + mu);
        const double r = 1.0 / (1.0 + mu);
        for (std::size_t i = 0; i < b.size(); ++i) b[i] = w * (z[i] - adj[i]) + r * x[i];
    }
    return b;
}

Image layer_adjoint(const PnnLayerParams& layer, const FeatureMap& u)
{
    return conv_adjoint_apply(layer.forward, layer.adjoint, u);
}

}  // namespace

FeatureMap dual_sublayer(const Image& x, const FeatureMap& u, const PnnLayerParams& layer, double tau, double nu)
{
    if (!(nu >= 0.0)) throw ParameterError("dual_sublayer: nu must be >= 0");
    require_same_shape(u.shape(), Shape{layer.forward.outputs(), x.height(), x.width()}, "dual_sublayer");
    return hardtanh(dual_preactivation(u, conv_apply(layer.forward, x), tau), nu);
}

Image primal_sublayer(const Image& x, const FeatureMap& u, const PnnLayerParams& layer, double mu, const Image& z,
                      const BoxConstraint& box)
{
    if (!(mu > 0.0)) throw ParameterError("primal_sublayer: mu must be > 0 or +inf");
    require_same_shape(x.shape(), z.shape(), "primal_sublayer");
    Image b = primal_preactivation(z, layer_adjoint(layer, u), x, mu);
    project_box_inplace(b, box);
    return b;
}

ForwardResult pnn_forward(const PnnModel& model, const Image& z, double nu, const ForwardOptions& opts)
{
    if (!(nu >= 0.0)) throw ParameterError("pnn_forward: nu must be >= 0");
    if (z.channels() != model.C)
        throw ShapeError("pnn_forward: input has " + std::to_string(z.channels()) + " channels, model expects " +
                         std::to_string(model.C));
    if (static_cast<int>(model.layers.size()) != model.K) throw ContractError("pnn_forward: malformed model");

    const auto coeffs = layer_coefficients(model, opts.inertia_override);
    const BoxConstraint& box = model.box;

    Image x = z;
    FeatureMap u;
    if (opts.initial_dual) {
        require_same_shape(opts.initial_dual->shape(), Shape{model.J, z.height(), z.width()}, "pnn_forward initial dual");
        u = *opts.initial_dual;
    } else {
        u = conv_apply(model.layers.front().forward, z);
    }

    ForwardResult res;
    if (opts.record_tape) {
        Tape tape;
        tape.model = &model;
        tape.z = z;
        tape.nu = nu;
        tape.dual_from_z = !opts.initial_dual.has_value();
        tape.inertia_override = opts.inertia_override;
        tape.layers.reserve(model.K);
        res.tape = std::move(tape);
    }

    Image x_tilde;
    for (int k = 0; k < model.K; ++k) {
        const PnnLayerParams& layer = model.layers[k];
        const LayerCoefficients& c = coeffs[k];

        FeatureMap Dx = conv_apply(layer.forward, x);
        FeatureMap a = dual_preactivation(u, Dx, c.tau);
        FeatureMap u_tilde(a.shape());
        std::vector<std::uint8_t> dual_mask;
        if (opts.record_tape) dual_mask.resize(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            u_tilde[i] = std::clamp(a[i], -nu, nu);
            if (opts.record_tape) dual_mask[i] = std::abs(a[i]) < nu ? 1 : 0;
        }

        Image adj = layer_adjoint(layer, u_tilde);
        Image b = primal_preactivation(z, adj, x, c.mu);
        x_tilde = Image(b.shape());
        std::vector<std::uint8_t> primal_mask;
        if (opts.record_tape) primal_mask.resize(b.size());
        for (std::size_t i = 0; i < b.size(); ++i) {
            x_tilde[i] = std::clamp(b[i], box.lo, box.hi);
            if (opts.record_tape) primal_mask[i] = (b[i] > box.lo && b[i] < box.hi) ? 1 : 0;
        }

        FeatureMap u_next = has_dual_skip(model.arch) ? lincomb(1.0 + c.rho, u_tilde, -c.rho, u) : u_tilde;
        Image x_next = has_primal_skip(model.arch) ? lincomb(1.0 + c.alpha, x_tilde, -c.alpha, x) : x_tilde;

        if (opts.record_tape) {
            LayerRecord rec;
            rec.coeff = c;
            rec.x_prev = std::move(x);
            rec.u_prev = std::move(u);
            rec.dx_prev = std::move(Dx);
            rec.dual_mask = std::move(dual_mask);
            rec.u_tilde = u_tilde;
            rec.adj_u = std::move(adj);
            rec.primal_mask = std::move(primal_mask);
            rec.x_tilde = x_tilde;
            res.tape->layers.push_back(std::move(rec));
        }
        x = std::move(x_next);
        u = std::move(u_next);
    }
    res.x = std::move(x);
    res.u = std::move(u);
    res.x_tilde = std::move(x_tilde);
    return res;
}

std::vector<ParamSegment> param_layout(const PnnModel& model)
{
    std::vector<ParamSegment> segs;
    std::size_t offset = 0;
    auto add = [&](std::string name, std::vector<int> shape) {
        std::size_t n = 1;
        for (int d : shape) n *= static_cast<std::size_t>(d);
        segs.push_back(ParamSegment{std::move(name), std::move(shape), offset, n});
        offset += n;
    };
    for (int k = 0; k < model.K; ++k) {
        add("layer" + std::to_string(k + 1) + ".forward", {model.J, model.C, 3, 3});
        if (model.variant == VariantKind::LFO) add("layer" + std::to_string(k + 1) + ".adjoint", {model.C, model.J, 3, 3});
    }
    if (!model.log_mu.empty()) add("log_mu", {static_cast<int>(model.log_mu.size())});
    return segs;
}

std::vector<double> flatten_params(const PnnModel& model)
{
    std::vector<double> p;
    p.reserve(static_cast<std::size_t>(learnable_count(model)));
    for (const auto& l : model.layers) {
        p.insert(p.end(), l.forward.values().begin(), l.forward.values().end());
        if (l.adjoint.untied) p.insert(p.end(), l.adjoint.untied->values().begin(), l.adjoint.untied->values().end());
    }
    p.insert(p.end(), model.log_mu.begin(), model.log_mu.end());
    return p;
}

void assign_params(PnnModel& model, std::span<const double> params)
{
    if (params.size() != static_cast<std::size_t>(learnable_count(model)))
        throw ShapeError("assign_params: expected " + std::to_string(learnable_count(model)) + " values, got " +
                         std::to_string(params.size()));
    std::size_t pos = 0;
    auto take = [&](std::span<double> dst) {
        std::copy(params.begin() + pos, params.begin() + pos + dst.size(), dst.begin());
        pos += dst.size();
    };
    for (auto& l : model.layers) {
        take(l.forward.values());
        if (l.adjoint.untied) take(l.adjoint.untied->values());
    }
    take(model.log_mu);
    model.refresh_norms();
}

}  // namespace proxnn

#include "proxnn/linops.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "proxnn/rng.hpp"

namespace proxnn {

namespace detail {

void correlate_accumulate(std::span<const double> kernels, int outputs, int inputs, int kh, int kw,
                          std::span<const double> in, int height, int width, std::span<double> out)
{
    const int ry = kh / 2;
    const int rx = kw / 2;
    const std::size_t plane = static_cast<std::size_t>(height) * width;
    for (int o = 0; o < outputs; ++o) {
        double* dst = out.data() + o * plane;
        for (int i = 0; i < inputs; ++i) {
            const double* src = in.data() + i * plane;
            const double* k = kernels.data() + (static_cast<std::size_t>(o) * inputs + i) * kh * kw;
            for (int ty = 0; ty < kh; ++ty) {
                const int dy = ty - ry;
                const int y0 = std::max(0, -dy);
                const int y1 = std::min(height, height - dy);
                for (int tx = 0; tx < kw; ++tx) {
                    const int dx = tx - rx;
                    const double w = k[ty * kw + tx];
                    const int x0 = std::max(0, -dx);
                    const int x1 = std::min(width, width - dx);
                    for (int y = y0; y < y1; ++y) {
                        double* drow = dst + static_cast<std::size_t>(y) * width;
                        const double* srow = src + static_cast<std::size_t>(y + dy) * width + dx;
                        for (int x = x0; x < x1; ++x) drow[x] += w * srow[x];
                    }
                }
            }
        }
    }
}

namespace {
std::vector<double> flip_transpose(std::span<const double> kernels, int outputs, int inputs, int kh, int kw)
{
    std::vector<double> t(kernels.size());
    const int taps = kh * kw;
    for (int o = 0; o < outputs; ++o)
        for (int i = 0; i < inputs; ++i)
            for (int k = 0; k < taps; ++k)
                t[(static_cast<std::size_t>(i) * outputs + o) * taps + (taps - 1 - k)] =
                    kernels[(static_cast<std::size_t>(o) * inputs + i) * taps + k];
    return t;
}
}  // namespace

void correlate_transpose_accumulate(std::span<const double> kernels, int outputs, int inputs, int kh, int kw,
                                    std::span<const double> in, int height, int width, std::span<double> out)
{
    const auto flipped = flip_transpose(kernels, outputs, inputs, kh, kw);
    correlate_accumulate(flipped, inputs, outputs, kh, kw, in, height, width, out);
}

void correlate_kernel_gradient(int outputs, int inputs, int kh, int kw, std::span<const double> in,
                               std::span<const double> cot, int height, int width, double scale,
                               std::span<double> grad)
{
    const int ry = kh / 2;
    const int rx = kw / 2;
    const std::size_t plane = static_cast<std::size_t>(height) * width;
    for (int o = 0; o < outputs; ++o) {
        const double* c = cot.data() + o * plane;
        for (int i = 0; i < inputs; ++i) {
            const double* src = in.data() + i * plane;
            double* g = grad.data() + (static_cast<std::size_t>(o) * inputs + i) * kh * kw;
            for (int ty = 0; ty < kh; ++ty) {
                const int dy = ty - ry;
                const int y0 = std::max(0, -dy);
                const int y1 = std::min(height, height - dy);
                for (int tx = 0; tx < kw; ++tx) {
                    const int dx = tx - rx;
                    const int x0 = std::max(0, -dx);
                    const int x1 = std::min(width, width - dx);
                    double acc = 0.0;
                    for (int y = y0; y < y1; ++y) {
                        const double* crow = c + static_cast<std::size_t>(y) * width;
                        const double* srow = src + static_cast<std::size_t>(y + dy) * width + dx;
                        for (int x = x0; x < x1; ++x) acc += crow[x] * srow[x];
                    }
                    g[ty * kw + tx] += scale * acc;
                }
            }
        }
    }
}

}  // namespace detail

ConvStack::ConvStack(int outputs, int inputs) : ConvStack(outputs, inputs, std::vector<double>(
                                                                               static_cast<std::size_t>(outputs) * inputs * kTaps, 0.0))
{
}

ConvStack::ConvStack(int outputs, int inputs, std::vector<double> kernels)
    : outputs_(outputs), inputs_(inputs), kernels_(std::move(kernels))
{
    if (outputs <= 0 || inputs <= 0) throw ShapeError("ConvStack: dimensions must be positive");
    if (kernels_.size() != static_cast<std::size_t>(outputs) * inputs * kTaps)
        throw ShapeError("ConvStack: expected " + std::to_string(outputs * inputs * kTaps) + " kernel entries, got " +
                         std::to_string(kernels_.size()));
    for (double v : kernels_)
        if (!std::isfinite(v)) throw DomainError("ConvStack: non-finite kernel entry");
}

ConvStack ConvStack::transposed() const
{
    return ConvStack(inputs_, outputs_, detail::flip_transpose(kernels_, outputs_, inputs_, 3, 3));
}

ConvStack delta_stack(int channels, double scale)
{
    ConvStack D(channels, channels);
    for (int c = 0; c < channels; ++c) D.at(c, c, 0, 0) = scale;
    return D;
}

ConvStack gradient_stack(int channels)
{
    ConvStack D(2 * channels, channels);
    for (int c = 0; c < channels; ++c) {
        D.at(2 * c, c, 0, 0) = -1.0;
        D.at(2 * c, c, 0, 1) = 1.0;
        D.at(2 * c + 1, c, 0, 0) = -1.0;
        D.at(2 * c + 1, c, 1, 0) = 1.0;
    }
    return D;
}

ConvStack random_stack(int outputs, int inputs, double bound, std::uint64_t seed)
{
    Rng rng(seed);
    std::vector<double> k(static_cast<std::size_t>(outputs) * inputs * ConvStack::kTaps);
    for (double& v : k) v = rng.uniform(-bound, bound);
    return ConvStack(outputs, inputs, std::move(k));
}

void AdjointPolicy::validate(const ConvStack& forward) const
{
    if (mode == AdjointMode::Tied) {
        if (untied) throw ContractError("tied adjoint policy must not carry an untied stack");
        return;
    }
    if (!untied) throw ContractError("untied adjoint policy requires a stack");
    if (untied->inputs() != forward.outputs() || untied->outputs() != forward.inputs())
        throw ShapeError("untied adjoint stack must map " + std::to_string(forward.outputs()) + " features to " +
                         std::to_string(forward.inputs()) + " channels");
}

FeatureMap conv_apply(const ConvStack& D, const Image& x)
{
    if (x.channels() != D.inputs())
        throw ShapeError("conv_apply: image has " + std::to_string(x.channels()) + " channels, stack expects " +
                         std::to_string(D.inputs()));
    FeatureMap out(D.outputs(), x.height(), x.width());
    detail::correlate_accumulate(D.values(), D.outputs(), D.inputs(), 3, 3, x.values(), x.height(), x.width(),
                                 out.values());
    return out;
}

Image conv_adjoint_apply(const ConvStack& D, const FeatureMap& u)
{
    return conv_adjoint_apply(D, AdjointPolicy::tied(), u);
}

Image conv_adjoint_apply(const ConvStack& D, const AdjointPolicy& policy, const FeatureMap& u)
{
    if (u.channels() != D.outputs())
        throw ShapeError("conv_adjoint_apply: feature map has " + std::to_string(u.channels()) +
                         " features, stack has " + std::to_string(D.outputs()));
    policy.validate(D);
    // The tied adjoint is evaluated as a correlation with the flipped stack so that it
    // coincides bit-for-bit with an untied surrogate holding the same flipped kernels.
    const ConvStack flipped = policy.mode == AdjointMode::Tied ? D.transposed() : ConvStack{};
    const ConvStack& E = policy.mode == AdjointMode::Tied ? flipped : *policy.untied;
    Image out(E.outputs(), u.height(), u.width());
    detail::correlate_accumulate(E.values(), E.outputs(), E.inputs(), 3, 3, u.values(), u.height(), u.width(),
                                 out.values());
    return out;
}

void conv_kernel_gradient(const Image& x, const FeatureMap& cot, double scale, std::span<double> grad)
{
    if (x.height() != cot.height() || x.width() != cot.width()) throw ShapeError("conv_kernel_gradient: size mismatch");
    detail::correlate_kernel_gradient(cot.channels(), x.channels(), 3, 3, x.values(), cot.values(), x.height(),
                                      x.width(), scale, grad);
}

void conv_kernel_gradient(const FeatureMap& u, const Image& cot, double scale, std::span<double> grad)
{
    if (u.height() != cot.height() || u.width() != cot.width()) throw ShapeError("conv_kernel_gradient: size mismatch");
    detail::correlate_kernel_gradient(cot.channels(), u.channels(), 3, 3, u.values(), cot.values(), u.height(),
                                      u.width(), scale, grad);
}

LinearOperator make_conv_operator(const ConvStack& D, const AdjointPolicy& policy, int height, int width)
{
    policy.validate(D);
    const Shape in{D.inputs(), height, width};
    const Shape out{D.outputs(), height, width};
    LinearOperator op;
    op.in_size = in.size();
    op.out_size = out.size();
    op.apply = [D, height, width](std::span<const double> x, std::span<double> y) {
        std::fill(y.begin(), y.end(), 0.0);
        detail::correlate_accumulate(D.values(), D.outputs(), D.inputs(), 3, 3, x, height, width, y);
    };
    const ConvStack E = policy.mode == AdjointMode::Tied ? D.transposed() : *policy.untied;
    op.adjoint = [E, height, width](std::span<const double> u, std::span<double> x) {
        std::fill(x.begin(), x.end(), 0.0);
        detail::correlate_accumulate(E.values(), E.outputs(), E.inputs(), 3, 3, u, height, width, x);
    };
    return op;
}

double adjoint_residual(const LinearOperator& op, int trials, std::uint64_t seed)
{
    if (trials < 1) throw ParameterError("adjoint_residual: trials must be >= 1");
    Rng rng(seed);
    std::vector<double> x(op.in_size), u(op.out_size), Dx(op.out_size), Dtu(op.in_size);
    double worst = 0.0;
    for (int t = 0; t < trials; ++t) {
        for (double& v : x) v = rng.normal();
        for (double& v : u) v = rng.normal();
        op.apply(x, Dx);
        op.adjoint(u, Dtu);
        const double lhs = dot(Dx, u);
        const double rhs = dot(x, Dtu);
        const double denom = norm2(Dx) * norm2(u) + 1e-300;
        worst = std::max(worst, std::abs(lhs - rhs) / denom);
    }
    return worst;
}

double adjoint_residual(const ConvStack& D, const AdjointPolicy& policy, int height, int width, int trials,
                        std::uint64_t seed)
{
    return adjoint_residual(make_conv_operator(D, policy, height, width), trials, seed);
}

namespace {

bool power_iterate(const LinearOperator& op, std::vector<double> v, const SpectralNormOptions& opts,
                   SpectralNormResult& res)
{
    std::vector<double> w(op.out_size), z(op.in_size);
    double nv = norm2(v);
    if (nv == 0.0) return false;
    for (double& e : v) e /= nv;
    double prev = -1.0;
    res.converged = false;
    for (int it = 1; it <= opts.max_iter; ++it) {
        op.apply(v, w);
        const double sigma = norm2(w);  // sqrt of the Rayleigh quotient <v, A^T A v>
        if (sigma == 0.0) return false;
        op.adjoint(w, z);
        const double nz = norm2(z);
        if (nz == 0.0) return false;
        res.iterations = it;
        res.norm = sigma;
        res.right = v;
        res.left = w;
        for (double& e : res.left) e /= sigma;
        if (prev >= 0.0 && std::abs(sigma - prev) <= opts.tol * sigma) {
            res.converged = true;
            return true;
        }
        prev = sigma;
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = z[i] / nz;
    }
    return true;
}

std::vector<double> gaussian_vector(std::size_t n, std::uint64_t seed)
{
    Rng rng(seed);
    std::vector<double> v(n);
    for (double& e : v) e = rng.normal();
    return v;
}

}  // namespace

SpectralNormResult spectral_norm(const LinearOperator& op, const SpectralNormOptions& opts)
{
    if (!(opts.tol > 0.0)) throw ParameterError("spectral_norm: tol must be > 0");
    if (opts.max_iter < 1) throw ParameterError("spectral_norm: max_iter must be >= 1");
    SpectralNormResult res;
    std::vector<double> start;
    if (!opts.warm_start.empty()) {
        if (opts.warm_start.size() != op.in_size) throw ShapeError("spectral_norm: warm start has wrong length");
        start.assign(opts.warm_start.begin(), opts.warm_start.end());
    } else {
        start = gaussian_vector(op.in_size, opts.seed);
    }
    if (power_iterate(op, std::move(start), opts, res)) return res;
    // The start (or an iterate) fell into the null space; retry once from a fresh seed.
    if (power_iterate(op, gaussian_vector(op.in_size, Rng::derive_seed(opts.seed, 1)), opts, res)) return res;
    res = SpectralNormResult{};
    res.left.assign(op.out_size, 0.0);
    res.right.assign(op.in_size, 0.0);
    res.converged = true;
    return res;
}

SpectralNormResult leading_singular_triple(const LinearOperator& op, const SpectralNormOptions& opts)
{
    if (!(opts.tol > 0.0)) throw ParameterError("leading_singular_triple: tol must be > 0");
    if (opts.max_iter < 1) throw ParameterError("leading_singular_triple: max_iter must be >= 1");
    const std::size_t n = op.in_size;
    SpectralNormResult res;
    res.left.assign(op.out_size, 0.0);
    res.right.assign(n, 0.0);

    std::vector<double> v;
    if (!opts.warm_start.empty()) {
        if (opts.warm_start.size() != n) throw ShapeError("leading_singular_triple: warm start has wrong length");
        v.assign(opts.warm_start.begin(), opts.warm_start.end());
    } else {
        v = gaussian_vector(n, opts.seed);
    }
    std::vector<double> w(op.out_size), bv(n);
    auto normal_apply = [&](std::span<const double> x, std::span<double> out) {
        op.apply(x, w);
        op.adjoint(w, out);
    };

    const int m = static_cast<int>(std::min<std::size_t>(n, 100));
    int budget = opts.max_iter;
    bool reseeded = false;
    double theta = 0.0;
    while (budget > 0) {
        double nv = norm2(v);
        if (nv == 0.0) {
            if (reseeded) return res;  // zero operator
            v = gaussian_vector(n, Rng::derive_seed(opts.seed, 1));
            reseeded = true;
            continue;
        }
        for (double& e : v) e /= nv;

        std::vector<std::vector<double>> Q{v};
        std::vector<double> alpha, beta;
        for (int j = 0; j < m && budget > 0; ++j) {
            normal_apply(Q[j], bv);
            --budget;
            alpha.push_back(dot(Q[j], bv));
            for (int pass = 0; pass < 2; ++pass)
                for (const auto& q : Q) {
                    const double c = dot(q, bv);
                    for (std::size_t i = 0; i < n; ++i) bv[i] -= c * q[i];
                }
            const double b = norm2(bv);
            if (j + 1 == m || b <= 1e-14 * std::max(std::abs(alpha.back()), 1e-300)) break;
            // Cheap Ritz residual estimate |b * y_last| every few steps.
            if ((j + 1) % 4 == 0) {
                const int kk = j + 1;
                Eigen::MatrixXd Tj = Eigen::MatrixXd::Zero(kk, kk);
                for (int i = 0; i < kk; ++i) {
                    Tj(i, i) = alpha[i];
                    if (i + 1 < kk) Tj(i, i + 1) = Tj(i + 1, i) = beta[i];
                }
                Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Tj);
                const double th = es.eigenvalues()(kk - 1);
                if (th > 0.0 && std::abs(b * es.eigenvectors()(kk - 1, kk - 1)) <= 0.25 * opts.tol * th) break;
            }
            beta.push_back(b);
            std::vector<double> next(bv);
            for (double& e : next) e /= b;
            Q.push_back(std::move(next));
        }
        const int k = static_cast<int>(alpha.size());
        Eigen::MatrixXd T = Eigen::MatrixXd::Zero(k, k);
        for (int i = 0; i < k; ++i) {
            T(i, i) = alpha[i];
            if (i + 1 < k) T(i, i + 1) = T(i + 1, i) = beta[i];
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
        const Eigen::VectorXd y = es.eigenvectors().col(k - 1);
        std::vector<double> ritz(n, 0.0);
        for (int i = 0; i < k; ++i)
            for (std::size_t r = 0; r < n; ++r) ritz[r] += y(i) * Q[i][r];
        const double nr = norm2(ritz);
        if (nr == 0.0) {
            v.assign(n, 0.0);
            continue;
        }
        for (double& e : ritz) e /= nr;

        // True residual of the Ritz pair.
        normal_apply(ritz, bv);
        --budget;
        theta = dot(ritz, bv);
        double resid = 0.0;
        for (std::size_t i = 0; i < n; ++i) resid += (bv[i] - theta * ritz[i]) * (bv[i] - theta * ritz[i]);
        resid = std::sqrt(resid);
        res.iterations = opts.max_iter - budget;
        v = std::move(ritz);
        if (theta <= 0.0) {
            if (reseeded) return res;
            v = gaussian_vector(n, Rng::derive_seed(opts.seed, 1));
            reseeded = true;
            continue;
        }
        if (resid <= opts.tol * theta) {
            res.converged = true;
            break;
        }
    }
    op.apply(v, w);
    res.norm = norm2(w);
    res.right = v;
    res.left = w;
    if (res.norm > 0.0)
        for (double& e : res.left) e /= res.norm;
    return res;
}

BlurKernel::BlurKernel(int height, int width, std::vector<double> values)
    : height_(height), width_(width), values_(std::move(values))
{
    if (height <= 0 || width <= 0 || height % 2 == 0 || width % 2 == 0)
        throw ShapeError("BlurKernel: dimensions must be positive and odd");
    if (values_.size() != static_cast<std::size_t>(height) * width) throw ShapeError("BlurKernel: wrong entry count");
    double sum = 0.0;
    for (double v : values_) {
        if (!std::isfinite(v)) throw DomainError("BlurKernel: non-finite entry");
        sum += v;
    }
    if (sum == 0.0) throw ParameterError("BlurKernel: entries sum to zero, cannot normalize");
    for (double& v : values_) v /= sum;
}

BlurKernel BlurKernel::delta() { return BlurKernel(1, 1, {1.0}); }

BlurKernel BlurKernel::uniform(int size)
{
    return BlurKernel(size, size, std::vector<double>(static_cast<std::size_t>(size) * size, 1.0));
}

BlurKernel BlurKernel::gaussian(int size, double stddev)
{
    if (!(stddev > 0.0)) throw ParameterError("gaussian kernel: stddev must be > 0");
    std::vector<double> v(static_cast<std::size_t>(size) * size);
    const int r = size / 2;
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const double dy = y - r, dx = x - r;
            v[static_cast<std::size_t>(y) * size + x] = std::exp(-(dy * dy + dx * dx) / (2.0 * stddev * stddev));
        }
    return BlurKernel(size, size, std::move(v));
}

BlurKernel BlurKernel::load_text(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open kernel file '" + path + "'");
    std::vector<double> values;
    int rows = 0;
    int cols = -1;
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::vector<double> row;
        double v;
        while (ls >> v) row.push_back(v);
        if (!ls.eof()) throw FormatError("kernel file '" + path + "': non-numeric entry on row " + std::to_string(rows + 1));
        if (row.empty()) continue;
        if (cols >= 0 && static_cast<int>(row.size()) != cols) throw FormatError("kernel file '" + path + "': ragged rows");
        cols = static_cast<int>(row.size());
        values.insert(values.end(), row.begin(), row.end());
        ++rows;
    }
    if (rows == 0) throw FormatError("kernel file '" + path + "' is empty");
    return BlurKernel(rows, cols, std::move(values));
}

BlurKernel BlurKernel::from_spec(const std::string& spec)
{
    if (spec == "delta") return delta();
    if (spec == "uniform3") return uniform(3);
    if (spec.rfind("gauss", 0) == 0) {
        const auto dash = spec.find('-');
        if (dash != std::string::npos) {
            try {
                const int size = std::stoi(spec.substr(5, dash - 5));
                const double stddev = std::stod(spec.substr(dash + 1));
                return gaussian(size, stddev);
            } catch (const std::logic_error&) {
                throw ParameterError("bad gaussian kernel spec '" + spec + "'");
            }
        }
    }
    return load_text(spec);
}

Image blur_apply(const BlurKernel& A, const Image& x)
{
    Image out(x.shape());
    for (int c = 0; c < x.channels(); ++c)
        detail::correlate_accumulate(A.values(), 1, 1, A.height(), A.width(), x.channel(c), x.height(), x.width(),
                                     out.channel(c));
    return out;
}

Image blur_adjoint(const BlurKernel& A, const Image& x)
{
    Image out(x.shape());
    for (int c = 0; c < x.channels(); ++c)
        detail::correlate_transpose_accumulate(A.values(), 1, 1, A.height(), A.width(), x.channel(c), x.height(),
                                               x.width(), out.channel(c));
    return out;
}

LinearOperator make_blur_operator(const BlurKernel& A, Shape shape)
{
    LinearOperator op;
    op.in_size = op.out_size = shape.size();
    op.apply = [A, shape](std::span<const double> x, std::span<double> y) {
        Image out = blur_apply(A, Image(shape, std::vector<double>(x.begin(), x.end())));
        std::copy(out.values().begin(), out.values().end(), y.begin());
    };
    op.adjoint = [A, shape](std::span<const double> x, std::span<double> y) {
        Image out = blur_adjoint(A, Image(shape, std::vector<double>(x.begin(), x.end())));
        std::copy(out.values().begin(), out.values().end(), y.begin());
    };
    return op;
}

}  // namespace proxnn

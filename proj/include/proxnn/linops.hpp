#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "proxnn/grid.hpp"

namespace proxnn {

/// Bank of 3x3 cross-correlation kernels mapping `inputs` channels to `outputs`
/// channels with stride 1, zero padding and "same" output size.
///
/// As the analysis operator D it maps an Image (inputs = C) to a FeatureMap
/// (outputs = J). An untied adjoint surrogate uses the same type with the roles
/// swapped (inputs = J, outputs = C).
class ConvStack {
public:
    static constexpr int kTaps = 9;

    ConvStack() = default;
    ConvStack(int outputs, int inputs);
    ConvStack(int outputs, int inputs, std::vector<double> kernels);

    int outputs() const { return outputs_; }
    int inputs() const { return inputs_; }
    std::size_t size() const { return kernels_.size(); }

    /// Kernel tap for output o, input i at spatial offset (dy, dx), dy,dx in {-1,0,1}.
    double& at(int o, int i, int dy, int dx) { return kernels_[index(o, i, dy, dx)]; }
    double at(int o, int i, int dy, int dx) const { return kernels_[index(o, i, dy, dx)]; }

    std::span<double> values() { return kernels_; }
    std::span<const double> values() const { return kernels_; }

    /// Stack whose correlation equals the transposed correlation of this one
    /// (outputs and inputs swapped, kernels flipped).
    ConvStack transposed() const;

    bool operator==(const ConvStack&) const = default;

private:
    std::size_t index(int o, int i, int dy, int dx) const
    {
        return ((static_cast<std::size_t>(o) * inputs_ + i) * 3 + (dy + 1)) * 3 + (dx + 1);
    }

    int outputs_ = 0;
    int inputs_ = 0;
    std::vector<double> kernels_;
};

/// Built-in stacks.
ConvStack delta_stack(int channels, double scale = 1.0);  // J = C, identity per channel
/// Horizontal and vertical forward differences (J = 2 per channel, C channels).
ConvStack gradient_stack(int channels);
/// i.i.d. uniform entries in [-bound, bound].
ConvStack random_stack(int outputs, int inputs, double bound, std::uint64_t seed);

enum class AdjointMode { Tied, Untied };

struct AdjointPolicy {
    AdjointMode mode = AdjointMode::Tied;
    std::optional<ConvStack> untied;  // present iff mode == Untied

    static AdjointPolicy tied() { return {}; }
    static AdjointPolicy with_untied(ConvStack stack) { return {AdjointMode::Untied, std::move(stack)}; }
    void validate(const ConvStack& forward) const;
};

FeatureMap conv_apply(const ConvStack& D, const Image& x);
/// Tied: exact adjoint of conv_apply. Untied: correlation with the surrogate stack.
Image conv_adjoint_apply(const ConvStack& D, const AdjointPolicy& policy, const FeatureMap& u);
Image conv_adjoint_apply(const ConvStack& D, const FeatureMap& u);

// Raw correlation kernels on flat channel-major buffers.
namespace detail {
/// out[o] += sum_i k[o,i] (*) in[i]
void correlate_accumulate(std::span<const double> kernels, int outputs, int inputs, int kh, int kw,
                          std::span<const double> in, int height, int width, std::span<double> out);
/// Transposed correlation: out[i] += sum_o k[o,i] (*)^T in[o]
void correlate_transpose_accumulate(std::span<const double> kernels, int outputs, int inputs, int kh, int kw,
                                    std::span<const double> in, int height, int width, std::span<double> out);
/// grad[o,i,t] += scale * sum_p cot[o,p] * in[i, p + offset(t)]
void correlate_kernel_gradient(int outputs, int inputs, int kh, int kw, std::span<const double> in,
                               std::span<const double> cot, int height, int width, double scale,
                               std::span<double> grad);
}  // namespace detail

/// Accumulates scale * d<cot, D x>/dD into grad (same layout as D.values()).
void conv_kernel_gradient(const Image& x, const FeatureMap& cot, double scale, std::span<double> grad);
/// Accumulates scale * d<cot, E u>/dE into grad for a FeatureMap -> Image stack E.
void conv_kernel_gradient(const FeatureMap& u, const Image& cot, double scale, std::span<double> grad);

/// Flat linear map with its adjoint.
struct LinearOperator {
    std::size_t in_size = 0;
    std::size_t out_size = 0;
    std::function<void(std::span<const double>, std::span<double>)> apply;
    std::function<void(std::span<const double>, std::span<double>)> adjoint;
};

LinearOperator make_conv_operator(const ConvStack& D, const AdjointPolicy& policy, int height, int width);

/// max over trials of |<Dx,u> - <x,D^T u>| / (||Dx|| ||u|| + tiny), random Gaussian x, u.
double adjoint_residual(const LinearOperator& op, int trials, std::uint64_t seed);
double adjoint_residual(const ConvStack& D, const AdjointPolicy& policy, int height, int width, int trials,
                        std::uint64_t seed);

struct SpectralNormOptions {
    double tol = 1e-6;
    int max_iter = 500;
    std::uint64_t seed = 0;
    /// Optional start vector (length in_size); a seeded Gaussian start is used otherwise.
    std::span<const double> warm_start{};
};

struct SpectralNormResult {
    double norm = 0.0;
    std::vector<double> left;   // u1 = op(v1) / ||op(v1)||
    std::vector<double> right;  // v1, unit norm
    bool converged = false;
    int iterations = 0;
};

/// Power iteration on op^T op. Stops when successive estimates differ by less than
/// tol * estimate. A start in the null space triggers one restart from a new seed;
/// a zero operator returns norm 0 with zero vectors.
SpectralNormResult spectral_norm(const LinearOperator& op, const SpectralNormOptions& opts = {});

/// Leading singular triple by restarted Lanczos on op^T op with full
/// reorthogonalization. Converged once ||op^T op v - s^2 v|| <= tol * s^2; max_iter
/// caps the number of op/op^T application pairs. Much faster than power iteration
/// when the top of the spectrum is clustered, as it is for convolutions.
SpectralNormResult leading_singular_triple(const LinearOperator& op, const SpectralNormOptions& opts = {});

/// Normalized odd-sized blur kernel applied channel-wise.
class BlurKernel {
public:
    BlurKernel() = default;
    /// Entries are rescaled to sum to one.
    BlurKernel(int height, int width, std::vector<double> values);

    int height() const { return height_; }
    int width() const { return width_; }
    std::span<const double> values() const { return values_; }

    static BlurKernel delta();
    static BlurKernel uniform(int size);
    static BlurKernel gaussian(int size, double stddev);
    /// "delta", "uniform3", "gauss<size>-<std>" (e.g. "gauss5-1.0"), or a path to a
    /// plain-text matrix file with one row of decimal numbers per line.
    static BlurKernel from_spec(const std::string& spec);
    static BlurKernel load_text(const std::string& path);

private:
    int height_ = 0;
    int width_ = 0;
    std::vector<double> values_;
};

Image blur_apply(const BlurKernel& A, const Image& x);
Image blur_adjoint(const BlurKernel& A, const Image& x);
LinearOperator make_blur_operator(const BlurKernel& A, Shape shape);

}  // namespace proxnn

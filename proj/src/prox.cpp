#include "proxnn/prox.hpp"

#include <algorithm>
#include <cmath>

namespace proxnn {

void BoxConstraint::validate() const
{
    if (std::isnan(lo) || std::isnan(hi) || !(lo < hi)) throw ParameterError("box constraint requires lo < hi");
}

void project_box_inplace(Image& x, const BoxConstraint& box)
{
    for (double& v : x.values()) v = std::clamp(v, box.lo, box.hi);
}

Image project_box(const Image& x, const BoxConstraint& box)
{
    box.validate();
    Image out = x;
    project_box_inplace(out, box);
    return out;
}

FeatureMap hardtanh(const FeatureMap& u, double nu)
{
    if (!(nu >= 0.0)) throw ParameterError("hardtanh: nu must be >= 0");
    FeatureMap out(u.shape());
    for (std::size_t i = 0; i < u.size(); ++i) out[i] = std::clamp(u[i], -nu, nu);
    return out;
}

FeatureMap soft_threshold(const FeatureMap& u, double theta)
{
    if (!(theta >= 0.0)) throw ParameterError("soft_threshold: theta must be >= 0");
    FeatureMap out(u.shape());
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double a = std::abs(u[i]) - theta;
        out[i] = a > 0.0 ? std::copysign(a, u[i]) : 0.0;
    }
    return out;
}

Image prox_quadratic_box(const Image& v, double mu, const Image& z, const BoxConstraint& box)
{
    if (!(mu > 0.0)) throw ParameterError("prox_quadratic_box: mu must be > 0");
    require_same_shape(v.shape(), z.shape(), "prox_quadratic_box");
    box.validate();
    Image out(v.shape());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::clamp((v[i] + mu * z[i]) / (1.0 + mu), box.lo, box.hi);
    return out;
}

}  // namespace proxnn

#pragma once

#include <limits>

#include "proxnn/grid.hpp"

namespace proxnn {

/// Entrywise box [lo, hi]. Infinite bounds are allowed for an unconstrained box.
struct BoxConstraint {
    double lo = 0.0;
    double hi = 1.0;

    static BoxConstraint unit() { return {0.0, 1.0}; }
    static BoxConstraint unbounded()
    {
        return {-std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
    }
    void validate() const;
    bool contains(double v, double slack = 0.0) const { return v >= lo - slack && v <= hi + slack; }
    bool operator==(const BoxConstraint&) const = default;
};

Image project_box(const Image& x, const BoxConstraint& box);
void project_box_inplace(Image& x, const BoxConstraint& box);

/// Clamp to [-nu, nu]: the proximity operator of the conjugate of nu*||.||_1.
/// nu = +infinity leaves the input unchanged.
FeatureMap hardtanh(const FeatureMap& u, double nu);

/// sign(u) * max(|u| - theta, 0): the proximity operator of theta*||.||_1.
FeatureMap soft_threshold(const FeatureMap& u, double theta);

/// prox of mu*(0.5||. - z||^2 + indicator of the box), i.e. P_C((v + mu z) / (1 + mu)).
Image prox_quadratic_box(const Image& v, double mu, const Image& z, const BoxConstraint& box);

}  // namespace proxnn

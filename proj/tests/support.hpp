#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "proxnn/grid.hpp"
#include "proxnn/linops.hpp"
#include "proxnn/pnn.hpp"
#include "proxnn/rng.hpp"

namespace testing {

using namespace proxnn;

inline Image random_image(Shape s, std::uint64_t seed, double lo = 0.0, double hi = 1.0)
{
    Rng rng(seed);
    Image out(s);
    for (double& v : out.values()) v = rng.uniform(lo, hi);
    return out;
}

inline FeatureMap random_features(Shape s, std::uint64_t seed, double scale = 1.0)
{
    Rng rng(seed);
    FeatureMap out(s);
    for (double& v : out.values()) v = scale * rng.normal();
    return out;
}

/// Column-by-column materialization of a flat linear map.
inline Eigen::MatrixXd materialize(const LinearOperator& op)
{
    Eigen::MatrixXd M(op.out_size, op.in_size);
    std::vector<double> e(op.in_size, 0.0), col(op.out_size);
    for (std::size_t j = 0; j < op.in_size; ++j) {
        e[j] = 1.0;
        op.apply(e, col);
        for (std::size_t i = 0; i < op.out_size; ++i) M(i, j) = col[i];
        e[j] = 0.0;
    }
    return M;
}

template <class F>
Eigen::MatrixXd materialize_map(std::size_t n, F&& apply_column)
{
    Eigen::MatrixXd M;
    for (std::size_t j = 0; j < n; ++j) {
        const std::vector<double> col = apply_column(j);
        if (j == 0) M.resize(static_cast<Eigen::Index>(col.size()), static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < col.size(); ++i) M(i, j) = col[i];
    }
    return M;
}

inline double sigma_max(const Eigen::MatrixXd& M)
{
    if (M.size() == 0) return 0.0;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(M);
    return svd.singularValues()(0);
}

inline ForwardOptions taped()
{
    ForwardOptions o;
    o.record_tape = true;
    return o;
}

inline double max_abs(std::span<const double> v)
{
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

}  // namespace testing

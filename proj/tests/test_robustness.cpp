#include <cmath>

#include "doctest.h"
#include "json.hpp"
#include "proxnn/image.hpp"
#include "proxnn/robustness.hpp"
#include "support.hpp"

using namespace proxnn;

namespace {

NormSettings norms(int h, int w)
{
    NormSettings n;
    n.height = h;
    n.width = w;
    return n;
}

Eigen::MatrixXd dense_jacobian(const JacobianProbe& p)
{
    return testing::materialize_map(p.shape.size(), [&](std::size_t j) {
        Image e(p.shape);
        e[j] = 1.0;
        const Image col = jacobian_apply(p, e);
        return std::vector<double>(col.values().begin(), col.values().end());
    });
}

}  // namespace

TEST_SUITE("robustness")
{
    TEST_CASE("linear stand-ins")
    {
        const Shape s{1, 4, 4};
        CHECK(jacobian_spectral_norm(scaled_identity_probe(s, 1.0)).norm == doctest::Approx(1.0).epsilon(1e-6));
        CHECK(jacobian_spectral_norm(scaled_identity_probe(s, 0.0)).norm == 0.0);
        CHECK(jacobian_spectral_norm(reflected_probe(scaled_identity_probe(s, 1.0))).norm ==
              doctest::Approx(1.0).epsilon(1e-6));
        CHECK(jacobian_spectral_norm(reflected_probe(scaled_identity_probe(s, 0.5))).norm <= 1e-12);
        const JacobianProbe d = diagonal_probe(Shape{1, 1, 2}, {0.9, 0.1});
        CHECK(jacobian_spectral_norm(d).norm == doctest::Approx(0.9).epsilon(1e-6));
        CHECK(jacobian_spectral_norm(reflected_probe(d)).norm == doctest::Approx(0.8).epsilon(1e-6));
        CHECK_THROWS_AS(jacobian_apply(d, Image(1, 2, 2)), ShapeError);
        CHECK_THROWS_AS(jacobian_adjoint_apply(d, Image(1, 2, 2)), ShapeError);
    }

    TEST_CASE("network probe: adjoint identity and dense oracle")
    {
        for (std::uint64_t s = 0; s < 4; ++s) {
            const PnnModel m = make_model(s % 2 ? ArchKind::DScCP : ArchKind::DDFB,
                                          s < 2 ? VariantKind::LNO : VariantKind::LFO, 2, 2, 1, s, norms(4, 4));
            const Image z = testing::random_image({1, 4, 4}, 10 + s);
            const JacobianProbe p = make_probe(m, z, 0.01);
            const Image v = testing::random_image({1, 4, 4}, 20 + s, -1, 1);
            const Image w = testing::random_image({1, 4, 4}, 30 + s, -1, 1);
            const double lhs = dot(jacobian_apply(p, v), w);
            const double rhs = dot(v, jacobian_adjoint_apply(p, w));
            CHECK(std::abs(lhs - rhs) <= 1e-10 * std::max(1.0, std::abs(lhs)));

            const double oracle = testing::sigma_max(dense_jacobian(p));
            JacobianNormOptions o;
            o.tol = 1e-10;
            o.max_iter = 20000;
            CHECK(std::abs(jacobian_spectral_norm(p, o).norm - oracle) <= 1e-3 * std::max(oracle, 1e-12));

            const JacobianProbe h = reflected_probe(p);
            Eigen::MatrixXd Jh = 2.0 * dense_jacobian(p) - Eigen::MatrixXd::Identity(16, 16);
            CHECK((dense_jacobian(h) - Jh).cwiseAbs().maxCoeff() <= 1e-12);
        }
    }

    TEST_CASE("directional finite differences match J v")
    {
        const PnnModel m = make_model(ArchKind::DCP, VariantKind::LNO, 3, 4, 1, 5, norms(8, 8));
        const Image z = testing::random_image({1, 8, 8}, 6);
        const JacobianProbe p = make_probe(m, z, 0.02);
        int checked = 0;
        for (std::uint64_t s = 0; s < 10; ++s) {
            const Image v = testing::random_image({1, 8, 8}, 40 + s, -1, 1);
            const double eps = 1e-5;
            const auto fp = pnn_forward(m, lincomb(1.0, z, eps, v), 0.02, testing::taped());
            const auto fm = pnn_forward(m, lincomb(1.0, z, -eps, v), 0.02, testing::taped());
            const auto f0 = pnn_forward(m, z, 0.02, testing::taped());
            bool stable = true;
            for (int k = 0; k < m.K; ++k)
                stable = stable && fp.tape->layers[k].dual_mask == f0.tape->layers[k].dual_mask &&
                         fm.tape->layers[k].dual_mask == f0.tape->layers[k].dual_mask &&
                         fp.tape->layers[k].primal_mask == f0.tape->layers[k].primal_mask &&
                         fm.tape->layers[k].primal_mask == f0.tape->layers[k].primal_mask;
            if (!stable) continue;
            ++checked;
            const Image fd = scaled(lincomb(1.0, fp.x, -1.0, fm.x), 0.5 / eps);
            CHECK(max_abs_diff(fd, jacobian_apply(p, v)) <= 1e-5);
        }
        CHECK(checked > 0);
    }

    TEST_CASE("report statistics")
    {
        const RobustnessReport r = summarize(TargetMap::F, {0.5, 0.1, 0.9, 0.3});
        CHECK(r.max == 0.9);
        CHECK(r.median == doctest::Approx(0.4));
        CHECK(r.q1 == doctest::Approx(0.25));
        CHECK(r.q3 == doctest::Approx(0.6));
        CHECK(r.csv().rfind("sample,norm\n", 0) == 0);
        const RobustnessReport one = summarize(TargetMap::H, {0.7});
        CHECK(one.max == 0.7);
        CHECK(nlohmann::json::parse(one.json())["target"] == "h");
    }

    TEST_CASE("estimates over samples")
    {
        const PnnModel m = make_model(ArchKind::DDFB, VariantKind::LNO, 2, 4, 1, 2, norms(8, 8));
        Sample s;
        s.clean = synth_cartoon(8, 8, 1);
        NoiseSpec ns;
        ns.sigma = 0.1;
        ns.seed = 4;
        s.noisy = add_noise(s.clean, ns);
        s.sigma = 0.1;
        const auto single = lipschitz_estimate(m, {s});
        REQUIRE(single.norms.size() == 1);
        CHECK(single.max == single.norms[0]);
        const auto dup = lipschitz_estimate(m, {s, s});
        CHECK(dup.norms[0] == dup.norms[1]);
        CHECK(dup.norms[0] == single.norms[0]);
        const auto h = nonexpansiveness_score(m, {s});
        CHECK(h.target == TargetMap::H);
        CHECK(h.max >= 0.0);
    }

    TEST_CASE("product bound dominates the local constant")
    {
        for (std::uint64_t s = 0; s < 6; ++s) {
            const ArchKind archs[] = {ArchKind::DDFB, ArchKind::DDiFB, ArchKind::DCP, ArchKind::DScCP};
            const PnnModel m = make_model(archs[s % 4], s < 3 ? VariantKind::LNO : VariantKind::LFO, 3, 4, 1, s,
                                          norms(8, 8));
            const double bound = lipschitz_product_bound(m);
            for (std::uint64_t t = 0; t < 2; ++t) {
                const Image z = testing::random_image({1, 8, 8}, 100 * s + t);
                JacobianNormOptions o;
                o.tol = 1e-8;
                o.max_iter = 5000;
                const double chi = jacobian_spectral_norm(make_probe(m, z, 0.02), o).norm;
                CHECK(chi <= bound + 1e-9);
            }
        }
        // one delta layer with tau = 1.99 under DDFB
        const PnnModel d = make_tied_model(ArchKind::DDFB, 1, delta_stack(1), 1.0, norms(8, 8));
        const double chi = jacobian_spectral_norm(make_probe(d, Image(1, 8, 8, 0.5), 0.3)).norm;
        CHECK(chi <= lipschitz_product_bound(d) + 1e-9);
    }

    TEST_CASE("local Lipschitz validity")
    {
        const PnnModel m = make_model(ArchKind::DDiFB, VariantKind::LNO, 3, 4, 1, 8, norms(8, 8));
        const Image z = testing::random_image({1, 8, 8}, 9);
        JacobianNormOptions o;
        o.tol = 1e-10;
        o.max_iter = 5000;
        const double chi = jacobian_spectral_norm(make_probe(m, z, 0.02), o).norm;
        const Image f0 = pnn_forward(m, z, 0.02).x;
        for (std::uint64_t s = 0; s < 100; ++s) {
            Image e = testing::random_image({1, 8, 8}, 1000 + s, -1, 1);
            e = scaled(e, 1e-4 * norm2(z) / norm2(e) * 0.5);
            const Image f1 = pnn_forward(m, lincomb(1.0, z, 1.0, e), 0.02).x;
            CHECK(diff_norm(f1, f0) <= (chi + 1e-6) * norm2(e));
        }
    }
}

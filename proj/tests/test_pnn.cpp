#include <cmath>
#include <limits>

#include "doctest.h"
#include "proxnn/pnn.hpp"
#include "proxnn/solvers.hpp"
#include "support.hpp"

using namespace proxnn;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

const ArchKind kArchs[] = {ArchKind::DDFB, ArchKind::DDiFB, ArchKind::DCP, ArchKind::DScCP};
const VariantKind kVariants[] = {VariantKind::LNO, VariantKind::LFO};

NormSettings small_norms(int h, int w)
{
    NormSettings n;
    n.height = h;
    n.width = w;
    return n;
}

PnnLayerParams delta_layer()
{
    PnnLayerParams l;
    l.forward = delta_stack(1);
    return l;
}

}  // namespace

TEST_SUITE("pnn")
{
    TEST_CASE("sublayers by hand")
    {
        const PnnLayerParams layer = delta_layer();
        const Image x(1, 3, 3, 0.2);
        const FeatureMap u(1, 3, 3, 0.2);
        const FeatureMap ut = dual_sublayer(x, u, layer, 1.99, 1.0);
        for (double v : ut.values()) CHECK(v == doctest::Approx(0.598).epsilon(1e-14));
        const Image xt = primal_sublayer(x, ut, layer, kInf, x, BoxConstraint::unit());
        for (double v : xt.values()) CHECK(v == 0.0);

        CHECK(testing::max_abs(dual_sublayer(Image(1, 3, 3), FeatureMap(1, 3, 3), layer, 1.0, 1.0).values()) == 0.0);
        const FeatureMap lin = dual_sublayer(x, u, layer, 0.7, kInf);
        for (double v : lin.values()) CHECK(v == 0.2 + 0.7 * 0.2);

        const Image z = testing::random_image({1, 4, 4}, 3, -0.5, 1.5);
        const Image pz = project_box(z, BoxConstraint::unit());
        CHECK(primal_sublayer(z, FeatureMap(1, 4, 4), layer, kInf, z, BoxConstraint::unit()) == pz);
        CHECK(max_abs_diff(primal_sublayer(z, FeatureMap(1, 4, 4), layer, 1.0, z, BoxConstraint::unit()), pz) <= 1e-15);
        CHECK_THROWS_AS(dual_sublayer(x, FeatureMap(2, 3, 3), layer, 1.0, 1.0), ShapeError);
    }

    TEST_CASE("one DDFB-LNO layer with a delta kernel")
    {
        const PnnModel m = make_tied_model(ArchKind::DDFB, 1, delta_stack(1), 1.0, small_norms(8, 8));
        CHECK(m.layers[0].norm == doctest::Approx(1.0).epsilon(1e-10));
        const auto c = layer_coefficients(m);
        CHECK(c[0].tau == doctest::Approx(1.99).epsilon(1e-9));
        const auto r = pnn_forward(m, Image(1, 8, 8, 0.2), 1.0);
        for (double v : r.x.values()) CHECK(v == 0.0);
        for (double v : r.u.values()) CHECK(v == doctest::Approx(0.598).epsilon(1e-9));
    }

    TEST_CASE("nu = 0 collapses every architecture to the projection")
    {
        const Image inside = testing::random_image({1, 8, 8}, 8);
        const Image z = testing::random_image({1, 8, 8}, 9, -0.3, 1.3);
        const Image pz = project_box(z, BoxConstraint::unit());
        for (auto a : kArchs)
            for (auto v : kVariants) {
                const PnnModel m = make_model(a, v, 3, 4, 1, 17, small_norms(8, 8));
                CHECK(max_abs_diff(pnn_forward(m, inside, 0.0).x, inside) <= 1e-15);
                // the primal extrapolation starts from x_0 = z, so outside the box only
                // the last primal sublayer output collapses for DCP / DScCP
                const auto r = pnn_forward(m, z, 0.0);
                if (a == ArchKind::DDFB || a == ArchKind::DDiFB) CHECK(max_abs_diff(r.x, pz) <= 1e-15);
            }
        const PnnModel m = make_model(ArchKind::DDFB, VariantKind::LNO, 2, 4, 1, 1, small_norms(8, 8));
        CHECK_THROWS_AS(pnn_forward(m, z, -1.0), ParameterError);
        CHECK_THROWS_AS(pnn_forward(m, Image(3, 8, 8), 0.1), ShapeError);
    }

    TEST_CASE("outputs stay in the box")
    {
        for (auto a : kArchs)
            for (auto v : kVariants) {
                const PnnModel m = make_model(a, v, 4, 4, 1, 5, small_norms(8, 8));
                for (std::uint64_t s = 0; s < 3; ++s) {
                    const Image z = testing::random_image({1, 8, 8}, s, -0.5, 1.5);
                    const auto r = pnn_forward(m, z, 0.05);
                    for (double x : r.x_tilde.values()) CHECK(BoxConstraint::unit().contains(x));
                    if (a == ArchKind::DDFB || a == ArchKind::DDiFB) CHECK(r.x == r.x_tilde);
                    const auto zero = pnn_forward(m, Image(1, 8, 8), 0.05);
                    for (double x : zero.x_tilde.values()) CHECK(BoxConstraint::unit().contains(x));
                }
            }
    }

    TEST_CASE("architecture degeneracies")
    {
        const Image z = testing::random_image({1, 8, 8}, 21);
        // tau of LNO depends on the architecture, so compare the LFO models (tau = 1)
        PnnModel ddifb = make_model(ArchKind::DDiFB, VariantKind::LFO, 4, 4, 1, 8, small_norms(8, 8));
        PnnModel ddfb = ddifb;
        ddfb.arch = ArchKind::DDFB;
        ForwardOptions o0;
        o0.inertia_override = 0.0;
        CHECK(pnn_forward(ddifb, z, 0.05, o0).x == pnn_forward(ddfb, z, 0.05).x);

        for (auto v : kVariants) {
            PnnModel sccp = make_model(ArchKind::DScCP, v, 4, 4, 1, 9, small_norms(8, 8));
            std::fill(sccp.log_mu.begin(), sccp.log_mu.end(), std::log(0.7));
            PnnModel cp = sccp;
            cp.arch = ArchKind::DCP;
            cp.log_mu = {std::log(0.7)};
            ForwardOptions o1;
            o1.inertia_override = 1.0;
            CHECK(pnn_forward(sccp, z, 0.05, o1).x == pnn_forward(cp, z, 0.05).x);
        }

        // alpha = 0: plain Arrow-Hurwicz steps
        const ConvStack D = random_stack(4, 1, 0.4, 2);
        const PnnModel tied = make_tied_model(ArchKind::DScCP, 6, D, 0.8, small_norms(8, 8));
        ForwardOptions oz;
        oz.inertia_override = 0.0;
        const auto net = pnn_forward(tied, z, 0.05, oz);
        const auto coeff = layer_coefficients(tied, 0.0);
        PrimalDualState st;
        st.x = z;
        st.u = conv_apply(D, z);
        for (int k = 0; k < 6; ++k) st = ah_joint_step(st, coeff[k].tau, coeff[k].mu, z, D, 0.05, BoxConstraint::unit());
        CHECK(max_abs_diff(net.x, st.x) <= 1e-14);
    }

    TEST_CASE("tied DDFB-LNO matches the dual forward-backward solver")
    {
        const ConvStack D = random_stack(4, 1, 0.5, 33);
        const Image z = testing::random_image({1, 8, 8}, 34);
        const PnnModel m = make_tied_model(ArchKind::DDFB, 2000, D, 1.0, small_norms(8, 8));
        const auto net = pnn_forward(m, z, 0.05);
        SolveOptions o;
        o.tol = 0.0;
        const auto ref = difb_solve(z, D, AdjointPolicy::tied(), 0.05, BoxConstraint::unit(),
                                    difb_schedule(3.0, m.layers[0].norm, false, 2000), 2000, o);
        CHECK(max_abs_diff(net.x, ref.x) <= 1e-4);
    }

    TEST_CASE("LNO step sizes satisfy their inequalities")
    {
        for (auto a : kArchs) {
            PnnModel m = make_model(a, VariantKind::LNO, 5, 4, 1, 44, small_norms(16, 16));
            for (double& l : m.log_mu) l = std::log(0.3);
            const auto c = layer_coefficients(m);
            for (int k = 0; k < m.K; ++k) {
                const double n2 = m.layers[k].norm * m.layers[k].norm;
                if (std::isinf(c[k].mu))
                    CHECK(c[k].tau * n2 <= (a == ArchKind::DDFB ? 1.99 : 0.99) * (1 + 1e-12));
                else
                    CHECK(c[k].tau * c[k].mu * n2 <= 0.99 * (1 + 1e-12));
            }
        }
    }

    TEST_CASE("sigma = 0 gives tau = 0")
    {
        PnnModel m = make_tied_model(ArchKind::DDFB, 2, ConvStack(2, 1), 1.0, small_norms(8, 8));
        CHECK(m.layers[0].norm == 0.0);
        CHECK(layer_coefficients(m)[0].tau == 0.0);
        const Image z = testing::random_image({1, 8, 8}, 3);
        CHECK(pnn_forward(m, z, 0.1).x == z);
    }

    TEST_CASE("parameter counts")
    {
        CHECK(param_count(ArchKind::DDFB, VariantKind::LNO, 20, 64, 3) == 34560);
        CHECK(param_count(ArchKind::DCP, VariantKind::LNO, 20, 64, 3) == 34561);
        CHECK(param_count(ArchKind::DScCP, VariantKind::LNO, 20, 64, 3) == 34580);
        CHECK(param_count(ArchKind::DDFB, VariantKind::LFO, 20, 64, 3) == 69120);
        CHECK(param_count(ArchKind::DDiFB, VariantKind::LFO, 20, 64, 3) == 69121);
        CHECK(param_count(ArchKind::DScCP, VariantKind::LFO, 20, 64, 3) == 69160);
        CHECK(param_count(ArchKind::DDFB, VariantKind::LNO, 5, 8, 1) == 360);
        for (auto a : kArchs)
            for (int K : {1, 3, 7}) {
                const long long lno_conv = 9LL * K * 5 * 2;
                const long long lfo = param_count(a, VariantKind::LFO, K, 5, 2);
                CHECK(lfo - 2 * lno_conv >= 0);
                CHECK(lfo - 2 * lno_conv <= 2 * K);
            }
        const PnnModel m = make_model(ArchKind::DScCP, VariantKind::LNO, 3, 4, 1, 0, small_norms(8, 8));
        CHECK(learnable_count(m) == 3 * 4 * 9 + 3);
        CHECK(learnable_count(m) == param_count(ArchKind::DScCP, VariantKind::LNO, 3, 4, 1));
    }

    TEST_CASE("parameter names and flattening")
    {
        CHECK(parse_arch("DDiFB") == ArchKind::DDiFB);
        CHECK(parse_variant("lfo") == VariantKind::LFO);
        CHECK_THROWS_AS(parse_arch("resnet"), ParameterError);
        PnnModel m = make_model(ArchKind::DCP, VariantKind::LFO, 2, 3, 1, 4, small_norms(8, 8));
        const auto lay = param_layout(m);
        REQUIRE(lay.size() == 5);
        CHECK(lay[0].name == "layer1.forward");
        CHECK(lay[1].name == "layer1.adjoint");
        CHECK(lay[4].name == "log_mu");
        std::vector<double> p = flatten_params(m);
        CHECK(p.size() == static_cast<std::size_t>(learnable_count(m)));
        for (double& v : p) v *= 0.5;
        assign_params(m, p);
        CHECK(flatten_params(m) == p);
        CHECK_THROWS_AS(assign_params(m, std::vector<double>(3)), ShapeError);
    }

    TEST_CASE("initialization range and model validation")
    {
        const PnnModel m = make_model(ArchKind::DDFB, VariantKind::LFO, 2, 4, 3, 7, small_norms(8, 8));
        const double bound = 1.0 / std::sqrt(27.0);
        for (const auto& l : m.layers)
            for (double v : l.forward.values()) CHECK(std::abs(v) <= bound);
        PnnModel bad = m;
        bad.layers.pop_back();
        CHECK_THROWS_AS(bad.validate(), ShapeError);
        bad = m;
        bad.log_mu = {0.0};
        CHECK_THROWS_AS(bad.validate(), ContractError);
    }
}

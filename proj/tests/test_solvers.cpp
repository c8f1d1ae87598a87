#include <cmath>
#include <limits>

#include "doctest.h"
#include "proxnn/solvers.hpp"
#include "support.hpp"

using namespace proxnn;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Two pixels stored as two channels of a 1x1 image: with a single spatial site the
// zero padding adds no boundary term, so ||D x||_1 = |x_1 - x_2|.
struct TwoPixel {
    Image z{Shape{2, 1, 1}, std::vector<double>{1.0, 0.0}};
    ConvStack D{1, 2};
    double nu = 0.25;
    TwoPixel()
    {
        D.at(0, 0, 0, 0) = 1.0;
        D.at(0, 1, 0, 0) = -1.0;
    }
};

double op_norm(const ConvStack& D, int h, int w)
{
    SpectralNormOptions o;
    o.tol = 1e-12;
    o.max_iter = 5000;
    return leading_singular_triple(make_conv_operator(D, AdjointPolicy::tied(), h, w), o).norm;
}

}  // namespace

TEST_SUITE("map-solvers")
{
    TEST_CASE("objective values")
    {
        const TwoPixel p;
        const Image x(Shape{2, 1, 1}, std::vector<double>{0.75, 0.25});
        CHECK(std::abs(objective_F(x, p.z, p.D, p.nu, BoxConstraint::unit()) - 0.1875) <= 1e-12);
        const Image out(Shape{2, 1, 1}, std::vector<double>{1.5, 0.0});
        CHECK(std::isinf(objective_F(out, p.z, p.D, p.nu, BoxConstraint::unit())));

        const Image z = testing::random_image({1, 6, 6}, 3);
        const ConvStack G = gradient_stack(1);
        const FeatureMap Gz = conv_apply(G, z);
        double l1 = 0.0;
        for (double v : Gz.values()) l1 += std::abs(v);
        CHECK(objective_F(z, z, G, 0.3, BoxConstraint::unit()) == doctest::Approx(0.3 * l1).epsilon(1e-14));
    }

    TEST_CASE("dual forward-backward schedules")
    {
        CHECK(inertia_t(1, 3.0) == 1.0);
        CHECK(inertia_t(2, 3.0) == doctest::Approx(4.0 / 3.0));
        const SolverSchedule acc = difb_schedule(3.0, 1.0, true, 5);
        CHECK(acc.rho[0] == 0.0);
        CHECK(acc.rho[1] == doctest::Approx(0.2).epsilon(1e-14));
        CHECK(acc.tau[0] == doctest::Approx(0.99));
        const SolverSchedule plain = difb_schedule(3.0, 2.0, false, 4);
        for (int k = 0; k < 4; ++k) {
            CHECK(plain.tau[k] == doctest::Approx(0.4975).epsilon(1e-14));
            CHECK(plain.rho[k] == 0.0);
            CHECK(std::isinf(plain.mu[k]));
        }
        CHECK_THROWS_AS(difb_schedule(2.0, 1.0, true, 3), ParameterError);
        CHECK_NOTHROW(difb_schedule(2.0, 1.0, false, 3));
    }

    TEST_CASE("chambolle-pock schedules")
    {
        const SolverSchedule s = sccp_schedule(0.5, 1.0, true, 50);
        CHECK(std::abs(s.alpha[0] - 0.70711) <= 1e-5);
        CHECK(std::abs(s.mu[1] - 0.35355) <= 1e-5);
        CHECK(std::abs(s.tau[1] / s.tau[0] - 1.41421) <= 1e-5);
        for (int k = 0; k + 1 < s.length(); ++k) {
            CHECK(s.mu[k + 1] < s.mu[k]);
            CHECK(s.tau[k + 1] > s.tau[k]);
            CHECK(s.tau[k] * s.mu[k] <= 0.99 * (1.0 + 1e-12));
        }
        const SolverSchedule plain = sccp_schedule(1.0, 1.0, false, 3);
        CHECK(plain.tau[0] == doctest::Approx(0.99));
        CHECK(plain.alpha[2] == 1.0);
        const SolverSchedule ah = ah_schedule(0.5, 2.0, 3);
        CHECK(ah.alpha[1] == 0.0);
        CHECK(ah.tau[0] * ah.mu[0] * 4.0 == doctest::Approx(0.99));
    }

    TEST_CASE("schedule invariants are enforced")
    {
        SolverSchedule s = difb_schedule(3.0, 1.0, false, 3);
        s.rho[1] = 0.1;
        CHECK_THROWS_AS(s.validate(), ContractError);
        SolverSchedule c = sccp_schedule(1.0, 1.0, false, 3);
        c.alpha[0] = 0.5;
        CHECK_THROWS_AS(c.validate(), ContractError);
        c = sccp_schedule(1.0, 1.0, false, 3);
        c.mu[0] = kInf;
        CHECK_THROWS_AS(c.validate(), ContractError);
    }

    TEST_CASE("two-pixel TV oracle")
    {
        const TwoPixel p;
        const double n = op_norm(p.D, 1, 1);
        CHECK(n == doctest::Approx(std::sqrt(2.0)).epsilon(1e-10));
        const auto dfb = difb_solve(p.z, p.D, AdjointPolicy::tied(), p.nu, BoxConstraint::unit(),
                                    difb_schedule(3.0, n, false, 2000), 2000);
        CHECK(std::abs(dfb.x[0] - 0.75) <= 1e-6);
        CHECK(std::abs(dfb.x[1] - 0.25) <= 1e-6);
        const auto sc = sccp_solve(p.z, p.D, AdjointPolicy::tied(), p.nu, BoxConstraint::unit(),
                                   sccp_schedule(1.0, n, false, 2000), 2000);
        CHECK(std::abs(sc.x[0] - 0.75) <= 1e-6);
        CHECK(std::abs(sc.x[1] - 0.25) <= 1e-6);
        CHECK(max_abs_diff(dfb.x, sc.x) <= 1e-5);
        CHECK(std::abs(objective_F(dfb.x, p.z, p.D, p.nu, BoxConstraint::unit()) - 0.1875) <= 1e-9);

        // the strongly convex schedule shrinks the primal step like 1/k and only reaches O(1/K)
        const auto acc = sccp_solve(p.z, p.D, AdjointPolicy::tied(), p.nu, BoxConstraint::unit(),
                                    sccp_schedule(1.0, n, true, 2000), 2000);
        CHECK(std::abs(acc.x[0] - 0.75) <= 5e-4);
        const auto acc10 = sccp_solve(p.z, p.D, AdjointPolicy::tied(), p.nu, BoxConstraint::unit(),
                                      sccp_schedule(1.0, n, true, 20000), 20000);
        CHECK(std::abs(acc10.x[0] - 0.75) <= 0.2 * std::abs(acc.x[0] - 0.75));

        const auto idfb = difb_solve(p.z, p.D, AdjointPolicy::tied(), p.nu, BoxConstraint::unit(),
                                     difb_schedule(3.0, n, true, 2000), 2000);
        CHECK(max_abs_diff(idfb.x, dfb.x) <= 1e-6);

        // Arrow-Hurwicz with a small primal step also gets there
        const auto ah = sccp_solve(p.z, p.D, AdjointPolicy::tied(), p.nu, BoxConstraint::unit(),
                                   ah_schedule(0.1, n, 20000), 20000);
        CHECK(std::abs(ah.x[0] - 0.75) <= 1e-4);
        CHECK(std::abs(ah.x[1] - 0.25) <= 1e-4);
    }

    TEST_CASE("degenerate cases return the projected input")
    {
        const Image z = testing::random_image({1, 6, 6}, 7, -0.5, 1.5);
        const Image pz = project_box(z, BoxConstraint::unit());
        const ConvStack G = gradient_stack(1);
        const auto r0 = difb_solve(z, G, AdjointPolicy::tied(), 0.0, BoxConstraint::unit(),
                                   difb_schedule(3.0, 2.0, false, 100), 100);
        CHECK(r0.x == pz);
        CHECK(r0.iterations == 1);
        const auto rz = difb_solve(z, ConvStack(2, 1), AdjointPolicy::tied(), 0.5, BoxConstraint::unit(),
                                   difb_schedule(3.0, 1.0, false, 10), 10);
        CHECK(rz.x == pz);
        const auto s0 = sccp_solve(z, G, AdjointPolicy::tied(), 0.0, BoxConstraint::unit(),
                                   sccp_schedule(1.0, 2.0, true, 100), 100);
        CHECK(max_abs_diff(s0.x, pz) <= 1e-15);
        CHECK_THROWS_AS(difb_solve(z, G, AdjointPolicy::with_untied(G.transposed()), 0.1, BoxConstraint::unit(),
                                   difb_schedule(3.0, 2.0, false, 5), 5),
                        ContractError);
    }

    TEST_CASE("solvers agree on random instances and descend")
    {
        for (std::uint64_t s = 0; s < 4; ++s) {
            const ConvStack D = random_stack(4, 1, 0.5, s);
            const Image z = testing::random_image({1, 8, 8}, 500 + s);
            const double n = op_norm(D, 8, 8);
            SolveOptions o;
            o.tol = 0.0;
            const auto a = difb_solve(z, D, AdjointPolicy::tied(), 0.1, BoxConstraint::unit(),
                                      difb_schedule(3.0, n, false, 5000), 5000, o);
            const auto b = sccp_solve(z, D, AdjointPolicy::tied(), 0.1, BoxConstraint::unit(),
                                      sccp_schedule(1.0, n, false, 5000), 5000, o);
            CHECK(max_abs_diff(a.x, b.x) <= 1e-5);
            const double fa = objective_F(a.x, z, D, 0.1, BoxConstraint::unit());
            const double fb = objective_F(b.x, z, D, 0.1, BoxConstraint::unit());
            const double fstar = std::min(fa, fb);
            CHECK(fa - fstar <= 1e-6);
            CHECK(fb - fstar <= 1e-6);
            const auto& F = a.trace.objective;
            for (std::size_t k = 11; k < F.size(); ++k) CHECK(F[k] - fstar <= F[k - 1] - fstar + 1e-12);
            CHECK(a.trace.size() == static_cast<std::size_t>(a.iterations));
        }
    }

    TEST_CASE("arrow-hurwicz step by hand")
    {
        const ConvStack D = delta_stack(1);
        PrimalDualState st;
        st.x = Image(1, 3, 3, 0.2);
        st.u = FeatureMap(1, 3, 3, 0.0);
        const Image z(1, 3, 3, 0.2);
        const auto nx = ah_joint_step(st, 1.0, kInf, z, D, 10.0, BoxConstraint::unit());
        for (double v : nx.u.values()) CHECK(v == doctest::Approx(0.2));
        for (double v : nx.x.values()) CHECK(v == 0.0);
        CHECK(nx.k == 1);
        CHECK(nx.x_prev == st.x);

        const auto n0 = ah_joint_step(st, 1.0, 1.0, Image(1, 3, 3, 0.6), D, 0.0, BoxConstraint::unit());
        CHECK(testing::max_abs(n0.u.values()) == 0.0);
        for (double v : n0.x.values()) CHECK(v == doctest::Approx(0.4));

        st.x = Image(1, 3, 3, 1.4);
        const auto tiny = ah_joint_step(st, 1.0, 1e-12, z, D, 0.0, BoxConstraint::unit());
        for (double v : tiny.x.values()) CHECK(v == 1.0);
    }

    TEST_CASE("trace csv")
    {
        const TwoPixel p;
        const auto r = difb_solve(p.z, p.D, AdjointPolicy::tied(), p.nu, BoxConstraint::unit(),
                                  difb_schedule(3.0, 1.5, false, 3), 3);
        const std::string csv = r.trace.csv();
        CHECK(csv.rfind("iter,F,primal_change,dual_change\n", 0) == 0);
        CHECK(std::count(csv.begin(), csv.end(), '\n') == r.iterations + 1);
    }
}

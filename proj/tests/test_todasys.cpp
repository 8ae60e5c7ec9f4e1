#include "doctest.h"
#include "mft/todasys.hpp"

#include "mft/bubble.hpp"

#include <cmath>
#include <random>

using namespace mft;

namespace {

TorusField ones(TorusGrid g) {
    return sample(g, [](double, double) { return 1.0; });
}

TorusField bumpy_h1(TorusGrid g) {
    return sample(g, [](double x1, double x2) {
        return 1.0 + 0.3 * std::cos(2 * M_PI * x1) * std::cos(2 * M_PI * x2);
    });
}

TorusField smooth_field(TorusGrid g, unsigned seed, double amp = 0.4) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> u(-amp, amp);
    double a = u(rng), b = u(rng), c = u(rng), d = u(rng);
    TorusField f = sample(g, [&](double x1, double x2) {
        return a * std::cos(2 * M_PI * x1) + b * std::sin(2 * M_PI * x2) +
               c * std::cos(2 * M_PI * (x1 - x2)) + d * std::sin(4 * M_PI * x2);
    });
    f.shift_mean_to_zero();
    return f;
}

// places a state on the single-bubble branch of the first component: the
// assembled profile approximates the exponent u1 = 2 v1 - v2 of the first
// density, and the second component follows half the shadow field
struct BranchFixture {
    TorusGrid grid{128};
    TorusField h1, h2;
    ShadowState shadow;
    BubbleProblem bubble;
    TodaProblem prob;
    double rho1_pred;
    double height_const;  // sup(2 v1 - v2) = 2 lambda + height_const
    double analytic_coeff = 0.0;  // branch-law multiplier of lambda e^{-lambda}
    TodaState ansatz;

    explicit BranchFixture(double lam = 6.0)
        : h1(bumpy_h1(grid)), h2(ones(grid)),
          shadow(newton_shadow(ShadowProblem(2 * M_PI, h1, h2),
                               ShadowState({Vec2{0.02, 0.03}}, TorusField(grid)),
                               1e-10)),
          bubble{h1, 2 * M_PI, {}}, prob(h1, h2),
          rho1_pred(rho1_of_lambda(shadow, bubble, lam, 0.1, grid)),
          height_const(0.0),
          ansatz(TodaForm::V, TorusField(grid), TorusField(grid), rho1_pred,
                 2 * M_PI) {
        BubbleParams par;
        par.points = shadow.points;
        par.alphas = {0.0};
        par.lambdas = {lam};
        par.amps = {1.0};
        par.rho1 = rho1_pred;
        par.m = 1;
        par.r0 = 0.1;
        AssembledBubble b = assemble_bubble(par, shadow, bubble, grid);
        height_const = b.consts.s[0] - lam;
        analytic_coeff = b.consts.bracket[0] / b.consts.h_p[0];
        TorusField v1(grid), v2(grid);
        for (size_t k = 0; k < v1.mutable_values().size(); ++k) {
            v1.mutable_values()[k] =
                0.5 * b.field.values()[k] + 0.25 * shadow.w.values()[k];
            v2.mutable_values()[k] = 0.5 * shadow.w.values()[k];
        }
        v1.shift_mean_to_zero();
        v2.shift_mean_to_zero();
        ansatz.f1 = std::move(v1);
        ansatz.f2 = std::move(v2);
    }
};

}  // namespace

TEST_CASE("residual structure of the coupled system") {
    TorusGrid g(64);

    SUBCASE("flat weights annihilate the zero state in both forms") {
        TodaProblem prob(ones(g), ones(g));
        for (TodaForm form : {TodaForm::V, TodaForm::U}) {
            TodaState z(form, TorusField(g), TorusField(g), 2 * M_PI, 3 * M_PI);
            auto [r1, r2] = residual_toda(z, prob);
            CHECK(r1.sup_norm() <= 1e-13);
            CHECK(r2.sup_norm() <= 1e-13);
        }
    }
    SUBCASE("both components integrate to zero at a generic state") {
        TodaProblem prob(bumpy_h1(g), ones(g));
        TodaState s(TodaForm::V, smooth_field(g, 11), smooth_field(g, 12),
                    2.3 * M_PI, 1.7 * M_PI);
        auto [r1, r2] = residual_toda(s, prob);
        CHECK(std::abs(r1.mean()) <= 1e-12);
        CHECK(std::abs(r2.mean()) <= 1e-12);
    }
    SUBCASE("the two representations carry the same equations") {
        TodaProblem prob(bumpy_h1(g), ones(g));
        TodaState v(TodaForm::V, smooth_field(g, 21), smooth_field(g, 22),
                    2.3 * M_PI, 1.7 * M_PI);
        TodaState u = transform_uv(v);
        auto [rv1, rv2] = residual_toda(v, prob);
        auto [ru1, ru2] = residual_toda(u, prob);
        // the residual transforms with the same matrix as the fields
        double sup = 0.0;
        for (size_t k = 0; k < rv1.values().size(); ++k) {
            sup = std::max(sup, std::abs((2.0 * ru1.values()[k] + ru2.values()[k]) / 3.0 -
                                         rv1.values()[k]));
            sup = std::max(sup, std::abs((ru1.values()[k] + 2.0 * ru2.values()[k]) / 3.0 -
                                         rv2.values()[k]));
        }
        CHECK(sup <= 5e-11);
    }
    SUBCASE("representation change is an exact involution") {
        TodaState v(TodaForm::V, smooth_field(g, 31), smooth_field(g, 32), M_PI,
                    M_PI);
        TodaState back = transform_uv(transform_uv(v));
        TorusField d1 = back.f1, d2 = back.f2;
        d1 -= v.f1;
        d2 -= v.f2;
        CHECK(back.form == TodaForm::V);
        CHECK(d1.sup_norm() <= 1e-14);
        CHECK(d2.sup_norm() <= 1e-14);
    }
    SUBCASE("weights off the state grid are rejected") {
        TodaProblem prob(ones(TorusGrid(32)), ones(TorusGrid(32)));
        TodaState z(TodaForm::V, TorusField(g), TorusField(g), M_PI, M_PI);
        CHECK_THROWS_WITH(residual_toda(z, prob),
                          "weights must live on the state grid");
    }
    SUBCASE("an underflowing exponential degenerates the normalization") {
        TodaProblem prob(ones(g), ones(g));
        TorusField low = sample(g, [](double, double) { return -4.0e4; });
        TodaState s(TodaForm::V, low, TorusField(g), M_PI, M_PI);
        CHECK_THROWS_WITH(residual_toda(s, prob),
                          "degenerate weight: normalization integral vanishes");
    }
}

TEST_CASE("linearization of the coupled system") {
    TorusGrid g(64);
    TodaProblem prob(bumpy_h1(g), ones(g));
    TodaState v(TodaForm::V, smooth_field(g, 41), smooth_field(g, 42), 2.3 * M_PI,
                1.7 * M_PI);

    SUBCASE("matches central differences of the residual") {
        TorusField phi1 = smooth_field(g, 43), phi2 = smooth_field(g, 44);
        auto [j1, j2] = jacobian_apply_toda(v, prob, phi1, phi2);
        const double eps = 1e-4;
        TodaState plus = v, minus = v;
        TorusField s1 = phi1, s2 = phi2;
        s1 *= eps;
        s2 *= eps;
        plus.f1 += s1;
        plus.f2 += s2;
        minus.f1 -= s1;
        minus.f2 -= s2;
        auto rp = residual_toda(plus, prob);
        auto rm = residual_toda(minus, prob);
        double sup = 0.0, scale = std::max(j1.sup_norm(), j2.sup_norm());
        for (size_t k = 0; k < j1.values().size(); ++k) {
            sup = std::max(sup, std::abs((rp.first.values()[k] - rm.first.values()[k]) /
                                             (2 * eps) -
                                         j1.values()[k]));
            sup = std::max(sup, std::abs((rp.second.values()[k] - rm.second.values()[k]) /
                                             (2 * eps) -
                                         j2.values()[k]));
        }
        CHECK(sup / scale <= 1e-6);
    }
    SUBCASE("is only formulated for the diagonal representation") {
        TodaState u = transform_uv(v);
        CHECK_THROWS_WITH(jacobian_apply_toda(u, prob, TorusField(g), TorusField(g)),
                          "jacobian is formulated in the v-representation");
    }
}

TEST_CASE("newton solves of the coupled system") {
    TorusGrid g(64);

    SUBCASE("flat weights keep the zero solution") {
        TodaProblem prob(ones(g), ones(g));
        TodaState z(TodaForm::V, TorusField(g), TorusField(g), 2 * M_PI, 2 * M_PI);
        auto [st, rep] = newton_toda(z, prob, {2 * M_PI, 2 * M_PI}, 1e-11);
        CHECK(rep.converged);
        CHECK(st.f1.sup_norm() <= 1e-11);
        CHECK(st.f2.sup_norm() <= 1e-11);
    }
    SUBCASE("perturbed weights converge and satisfy the equations") {
        TodaProblem prob(bumpy_h1(g), sample(g, [](double, double x2) {
                             return 1.0 + 0.2 * std::sin(2 * M_PI * x2);
                         }));
        TodaState z(TodaForm::V, TorusField(g), TorusField(g), 2 * M_PI, 2 * M_PI);
        auto [st, rep] = newton_toda(z, prob, {2.5 * M_PI, 1.5 * M_PI}, 1e-11);
        CHECK(rep.converged);
        auto [r1, r2] = residual_toda(st, prob);
        CHECK(std::max(r1.sup_norm(), r2.sup_norm()) <= 1e-11);
        CHECK(st.f1.sup_norm() > 1e-3);  // genuinely nonflat
    }
    SUBCASE("the two representations converge to the same solution") {
        TodaProblem prob(bumpy_h1(g), ones(g));
        TodaState zv(TodaForm::V, TorusField(g), TorusField(g), 2 * M_PI, 2 * M_PI);
        TodaState zu(TodaForm::U, TorusField(g), TorusField(g), 2 * M_PI, 2 * M_PI);
        auto [sv, rv] = newton_toda(zv, prob, {2 * M_PI, 2 * M_PI}, 1e-11);
        auto [su, ru] = newton_toda(zu, prob, {2 * M_PI, 2 * M_PI}, 1e-11);
        CHECK(su.form == TodaForm::U);
        TodaState suv = transform_uv(su);
        TorusField d1 = suv.f1, d2 = suv.f2;
        d1 -= sv.f1;
        d2 -= sv.f2;
        CHECK(d1.sup_norm() <= 1e-10);
        CHECK(d2.sup_norm() <= 1e-10);
    }
    SUBCASE("parameter gates") {
        TodaProblem prob(ones(g), ones(g));
        TodaState z(TodaForm::V, TorusField(g), TorusField(g), 2 * M_PI, 2 * M_PI);
        CHECK_THROWS_WITH(newton_toda(z, prob, {-1.0, 2 * M_PI}, 1e-9),
                          "first parameter outside the solvability windows");
        CHECK_THROWS_WITH(newton_toda(z, prob, {4 * M_PI, 2 * M_PI}, 1e-9),
                          "first parameter outside the solvability windows");
        CHECK_THROWS_WITH(newton_toda(z, prob, {8.5 * M_PI, 2 * M_PI}, 1e-9),
                          "first parameter outside the solvability windows");
        CHECK_THROWS_WITH(newton_toda(z, prob, {2 * M_PI, 4 * M_PI}, 1e-9),
                          "second parameter on the critical lattice");
        CHECK_THROWS_WITH(newton_toda(z, prob, {2 * M_PI, 8 * M_PI}, 1e-9),
                          "second parameter on the critical lattice");
    }
}

TEST_CASE("continuation along a parameter path") {
    TorusGrid g(64);

    SUBCASE("flat weights ride the trivial branch to the path end") {
        TodaProblem prob(ones(g), ones(g));
        TodaState z(TodaForm::V, TorusField(g), TorusField(g), 2 * M_PI, 2 * M_PI);
        ContinuationRun run = continue_branch(z, prob, {{3.9 * M_PI, 2 * M_PI}});
        CHECK(run.termination == "path end");
        CHECK(run.branch.size() >= 3);
        for (const TodaState& s : run.branch) {
            CHECK(s.f1.sup_norm() <= 1e-9);
            CHECK(s.f2.sup_norm() <= 1e-9);
        }
        CHECK(run.branch.back().rho1 == doctest::Approx(3.9 * M_PI).epsilon(1e-12));
    }
    SUBCASE("perturbed weights grow monotonically below the critical value") {
        TodaProblem prob(bumpy_h1(g), ones(g));
        TodaState z(TodaForm::V, TorusField(g), TorusField(g), 2 * M_PI, 2 * M_PI);
        ContinuationRun up = continue_branch(z, prob, {{3.98 * M_PI, 2 * M_PI}});
        CHECK(up.termination == "path end");
        double prev = -1.0;
        for (const TodaState& s : up.branch) {
            CHECK(s.f1.sup_norm() >= prev);
            prev = s.f1.sup_norm();
        }

        // retracing the path returns to the starting state
        ContinuationRun down =
            continue_branch(up.branch.back(), prob, {{2 * M_PI, 2 * M_PI}});
        CHECK(down.termination == "path end");
        TorusField d1 = down.branch.back().f1, d2 = down.branch.back().f2;
        d1 -= up.branch.front().f1;
        d2 -= up.branch.front().f2;
        CHECK(d1.sup_norm() <= 1e-8);
        CHECK(d2.sup_norm() <= 1e-8);
    }
}

TEST_CASE("anchored solve on the blow-up branch") {
    BranchFixture fx;

    SUBCASE("pins the peak and recovers the branch parameter") {
        double height = fx.ansatz.f1.sup_norm();
        auto [st, rep] = newton_toda_anchored(fx.ansatz, fx.prob,
                                              fx.shadow.points[0], height, 1e-9);
        CHECK(rep.converged);
        CHECK(st.f1.sup_norm() == doctest::Approx(height).epsilon(1e-9));
        // the solved parameter sits a little below the leading-order law
        CHECK(st.rho1 > 4 * M_PI);
        CHECK(st.rho1 - 4 * M_PI < fx.rho1_pred - 4 * M_PI);
        CHECK(st.rho1 - 4 * M_PI > 0.5 * (fx.rho1_pred - 4 * M_PI));
        auto [r1, r2] = residual_toda(st, fx.prob);
        CHECK(std::max(r1.sup_norm(), r2.sup_norm()) <= 1e-9);
    }
}

TEST_CASE("continuation of the blow-up branch toward the critical value") {
    BranchFixture fx;
    ContinuationController ctrl;
    ctrl.step = 2e-4 * M_PI;
    ctrl.step_min = 1e-6 * M_PI;
    ctrl.step_max = 1e-3 * M_PI;
    ctrl.tol = 1e-9;
    ContinuationRun run =
        continue_branch(fx.ansatz, fx.prob, {{4 * M_PI + 6e-3, 2 * M_PI}}, ctrl);

    REQUIRE(run.branch.size() >= 6);
    CHECK(run.termination == "path end");

    SUBCASE("second component locks onto half the shadow field") {
        double prev = 1e300;
        for (size_t i = run.branch.size() - 5; i < run.branch.size(); ++i) {
            BlowupDiagnostics dg =
                blowup_diagnostics(run.branch[i], fx.prob, &fx.shadow);
            CHECK(dg.v2_vs_half_w < prev);
            prev = dg.v2_vs_half_w;
        }
        CHECK(prev <= 1e-3);
    }
    SUBCASE("first density concentrates at the shadow point") {
        BlowupDiagnostics dg =
            blowup_diagnostics(run.branch.back(), fx.prob, &fx.shadow);
        REQUIRE(dg.points.size() == 1);
        CHECK(dg.concentration[0] > 0.9);
        CHECK(dg.peak_offset <= 0.05);
        CHECK(dg.sigma1[0][1] == doctest::Approx(2.0).epsilon(0.05));
        CHECK(dg.labels.size() == 1);
    }
    SUBCASE("branch parameter follows the height law") {
        // regression of (rho1 - 4 pi) e^{lambda} on the effective height
        // lambda read off the density exponent; restricted to well-resolved
        // cores (the late branch bends away once the core drops under a few
        // cells)
        double sl = 0, sll = 0, sy = 0, sly = 0;
        int nfit = 0;
        for (const TodaState& s : run.branch) {
            double umax = -1e300;
            for (size_t k = 0; k < s.f1.values().size(); ++k)
                umax = std::max(umax, 2.0 * s.f1.values()[k] - s.f2.values()[k]);
            double lam = 0.5 * (umax - fx.height_const);
            if (lam > 6.35) continue;
            double y = (s.rho1 - 4 * M_PI) * std::exp(lam);
            sl += lam;
            sll += lam * lam;
            sy += y;
            sly += lam * y;
            ++nfit;
        }
        REQUIRE(nfit >= 5);
        double slope = (nfit * sly - sl * sy) / (nfit * sll - sl * sl);
        CHECK(std::abs(slope / fx.analytic_coeff - 1.0) <= 0.3);
    }
}

TEST_CASE("blow-up diagnostics") {
    SUBCASE("a tall injected profile carries the full concentrated mass") {
        BranchFixture fx(12.0);
        BlowupDiagnostics dg = blowup_diagnostics(fx.ansatz, fx.prob, &fx.shadow);
        REQUIRE(dg.points.size() == 1);
        // first-density mass inside the 0.1-ball against the critical value
        CHECK(dg.concentration[0] * fx.ansatz.rho1 / (4 * M_PI) >= 0.98);
        CHECK(dg.sigma1[0][1] == doctest::Approx(2.0).epsilon(0.05));
        CHECK(dg.peak_offset <= 0.02);
        // local masses are nonnegative and monotone in the ball radius
        for (int k = 0; k < 3; ++k) {
            CHECK(dg.sigma1[0][k] >= 0.0);
            CHECK(dg.sigma2[0][k] >= 0.0);
        }
        CHECK(dg.sigma1[0][0] <= dg.sigma1[0][1]);
        CHECK(dg.sigma1[0][1] <= dg.sigma1[0][2]);
        CHECK(dg.sigma2[0][0] <= dg.sigma2[0][1]);
        CHECK(dg.sigma2[0][1] <= dg.sigma2[0][2]);
    }
    SUBCASE("a tame state yields no peaks") {
        TorusGrid g(64);
        TodaProblem prob(bumpy_h1(g), ones(g));
        TodaState s(TodaForm::V, smooth_field(g, 51), smooth_field(g, 52),
                    2 * M_PI, 2 * M_PI);
        BlowupDiagnostics dg = blowup_diagnostics(s, prob);
        CHECK(dg.points.empty());
        CHECK(dg.labels.empty());
    }
    SUBCASE("nearby maxima merge into one reported peak") {
        TorusGrid g(64);
        TodaProblem prob(ones(g), ones(g));
        auto bump = [](double x1, double x2, double c1, double c2, double h) {
            double r2 = (x1 - c1) * (x1 - c1) + (x2 - c2) * (x2 - c2);
            return h * std::exp(-r2 / (0.02 * 0.02));
        };
        TorusField u1 = sample(g, [&](double x1, double x2) {
            return bump(x1, x2, 0.25, 0.25, 12.0) + bump(x1, x2, 0.28, 0.25, 10.0) +
                   bump(x1, x2, 0.75, 0.75, 9.0);
        });
        u1.shift_mean_to_zero();
        TodaState s(TodaForm::U, u1, TorusField(g), 4 * M_PI, 2 * M_PI);
        BlowupDiagnostics dg = blowup_diagnostics(s, prob);
        REQUIRE(dg.points.size() == 2);
        // tallest first, the satellite within 0.05 absorbed
        CHECK(std::hypot(dg.points[0][0] - 0.25, dg.points[0][1] - 0.25) <= 0.02);
        CHECK(std::hypot(dg.points[1][0] - 0.75, dg.points[1][1] - 0.75) <= 0.02);
    }
}

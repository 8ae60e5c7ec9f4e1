#include "doctest.h"
#include "mft/green.hpp"

#include <cmath>
#include <complex>
#include <random>

using namespace mft;

TEST_CASE("kernel symmetry") {
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 100; ++t) {
        Vec2 p{u(rng), u(rng)}, x{u(rng), u(rng)};
        if (theta_dist({x[0] - p[0], x[1] - p[1]}) < 1e-3) continue;
        CHECK(std::abs(green_eval(p, x) - green_eval(x, p)) <= 1e-10);
    }
}

TEST_CASE("periodicity") {
    Vec2 p{0.37, 0.61};
    Vec2 x{0.11, 0.83};
    double g0 = green_eval(p, x);
    CHECK(green_eval(p, {x[0] + 1.0, x[1]}) == doctest::Approx(g0).epsilon(1e-13));
    CHECK(green_eval(p, {x[0], x[1] - 1.0}) == doctest::Approx(g0).epsilon(1e-13));
    CHECK(green_eval({p[0] - 1.0, p[1] + 1.0}, x) == doctest::Approx(g0).epsilon(1e-13));
}

TEST_CASE("pole is rejected") {
    Vec2 p{0.25, 0.25};
    CHECK_THROWS_AS(green_eval(p, p), std::runtime_error);
}

TEST_CASE("mean of the kernel vanishes") {
    Vec2 p{0.3, 0.4};
    CHECK(std::abs(green_mean_quadrature(p, TorusGrid(256))) <= 1e-8);
    Vec2 q{0.0, 0.0};
    CHECK(std::abs(green_mean_quadrature(q, TorusGrid(256))) <= 1e-8);
}

TEST_CASE("first Fourier mode of the kernel") {
    // split quadrature: the smooth part is integrated by the grid rule, the
    // log part in closed form (its (1,0) coefficient is -1/(2 pi))
    TorusGrid g(128);
    Vec2 p{0.0, 0.0};
    std::complex<double> acc = 0.0;
    for (int i = 0; i < g.n; ++i)
        for (int j = 0; j < g.n; ++j) {
            double x1 = i * g.spacing(), x2 = j * g.spacing();
            double smooth = green_regular(p, {x1, x2});
            double ph = -2.0 * M_PI * x1;
            acc += smooth * std::complex<double>(std::cos(ph), std::sin(ph));
        }
    acc *= g.cell_area();
    std::complex<double> coeff = acc - (-1.0 / (2.0 * M_PI)) / (2.0 * M_PI);
    CHECK(std::abs(coeff - std::complex<double>(1.0 / (4.0 * M_PI * M_PI), 0.0)) <= 1e-8);
}

TEST_CASE("laplacian away from the pole equals one") {
    // -Delta G = delta_p - 1, so away from p the Hessian trace is 1
    Vec2 p{0.5, 0.5};
    for (Vec2 x : {Vec2{0.1, 0.2}, Vec2{0.8, 0.9}, Vec2{0.3, 0.7}}) {
        auto h = green_hess(p, x);
        CHECK(h[0] + h[3] == doctest::Approx(1.0).epsilon(1e-12));
        // cross-check the Hessian entries by differencing the gradient
        double eps = 1e-6;
        Vec2 gp = green_grad(p, {x[0] + eps, x[1]});
        Vec2 gm = green_grad(p, {x[0] - eps, x[1]});
        CHECK(h[0] == doctest::Approx((gp[0] - gm[0]) / (2 * eps)).epsilon(1e-5));
        CHECK(h[2] == doctest::Approx((gp[1] - gm[1]) / (2 * eps)).epsilon(1e-5));
        Vec2 qp = green_grad(p, {x[0], x[1] + eps});
        Vec2 qm = green_grad(p, {x[0], x[1] - eps});
        CHECK(h[1] == doctest::Approx((qp[0] - qm[0]) / (2 * eps)).epsilon(1e-5));
    }
}

TEST_CASE("gradient matches finite differences of the kernel") {
    Vec2 p{0.2, 0.6};
    std::mt19937 rng(13);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 20; ++t) {
        Vec2 x{u(rng), u(rng)};
        if (theta_dist({x[0] - p[0], x[1] - p[1]}) < 0.05) continue;
        Vec2 g = green_grad(p, x);
        double eps = 1e-6;
        double d1 = (green_eval(p, {x[0] + eps, x[1]}) - green_eval(p, {x[0] - eps, x[1]})) / (2 * eps);
        double d2 = (green_eval(p, {x[0], x[1] + eps}) - green_eval(p, {x[0], x[1] - eps})) / (2 * eps);
        CHECK(g[0] == doctest::Approx(d1).epsilon(1e-6));
        CHECK(g[1] == doctest::Approx(d2).epsilon(1e-6));
    }
}

TEST_CASE("regular part") {
    Vec2 p{0.42, 0.17};

    SUBCASE("finite limit at the pole") {
        // values along a ray at shrinking distance form a Cauchy sequence
        double prev = 0.0;
        for (int k = 1; k <= 6; ++k) {
            double d = 0.1 * std::pow(0.5, k);
            double v = green_regular(p, {p[0] + d, p[1]});
            if (k > 1) CHECK(std::abs(v - prev) <= 10.0 * d);
            prev = v;
        }
        CHECK(prev == doctest::Approx(green_regular_constant()).epsilon(1e-6));
    }
    SUBCASE("translation invariance") {
        std::mt19937 rng(17);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        Vec2 x{0.8, 0.55};
        double r0 = green_regular(p, x);
        for (int t = 0; t < 10; ++t) {
            Vec2 a{u(rng), u(rng)};
            double r = green_regular({p[0] + a[0], p[1] + a[1]}, {x[0] + a[0], x[1] + a[1]});
            CHECK(std::abs(r - r0) <= 1e-10);
        }
    }
    SUBCASE("diagonal gradient is constant over the torus") {
        // analytic value, cross-checked by differencing R(x,x)
        std::mt19937 rng(19);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (int t = 0; t < 20; ++t) {
            Vec2 q{u(rng), u(rng)};
            Vec2 g = green_regular_grad_diag(q);
            double eps = 1e-5;
            double dp = green_regular({q[0] + eps, q[1] + eps}, {q[0] + eps, q[1] + eps});
            double dm = green_regular({q[0] - eps, q[1] - eps}, {q[0] - eps, q[1] - eps});
            CHECK(std::abs(g[0]) <= 1e-9);
            CHECK(std::abs(g[1]) <= 1e-9);
            CHECK(std::abs(dp - dm) / (2 * eps) <= 1e-9);
        }
    }
}

TEST_CASE("theta distance behaves like the flat distance near zero") {
    for (double r : {1e-2, 1e-3, 1e-4}) {
        CHECK(theta_dist({r, 0.0}) == doctest::Approx(r).epsilon(1e-3));
        CHECK(theta_dist({0.0, r}) == doctest::Approx(r).epsilon(1e-3));
        CHECK(theta_dist({r / std::sqrt(2.0), r / std::sqrt(2.0)}) ==
              doctest::Approx(r).epsilon(1e-3));
    }
}

TEST_CASE("agreement with the spectral construction") {
    Vec2 p{0.5, 0.5};
    std::vector<double> errs;
    for (int n : {64, 128, 256}) {
        TorusGrid g(n);
        TorusField spec = green_spectral_field(p, g);
        double err = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                Vec2 x{i * g.spacing(), j * g.spacing()};
                double d = theta_dist({x[0] - p[0], x[1] - p[1]});
                if (d < 0.1) continue;
                err = std::max(err, std::abs(spec(i, j) - green_eval(p, x)));
            }
        errs.push_back(err);
    }
    double o1 = std::log2(errs[0] / errs[1]);
    double o2 = std::log2(errs[1] / errs[2]);
    INFO("errors ", errs[0], " ", errs[1], " ", errs[2]);
    CHECK((o1 + o2) / 2.0 >= 1.8);
}

TEST_CASE("singular weight") {
    TorusGrid g(256);
    Vec2 p{0.5, 0.5};  // grid node

    SUBCASE("quadratic vanishing at the standard exponent") {
        TorusField f = singular_weight(p, 4.0 * M_PI, g);
        double expect = std::exp(-4.0 * M_PI * green_regular_constant());
        for (int k = 1; k <= 5; ++k) {
            double d = 0.1 * std::pow(0.5, k);
            Vec2 x{p[0] + d, p[1]};
            double val = std::pow(theta_dist({d, 0.0}), 2.0) * expect;
            // compare against the direct definition e^{-cG}
            double direct = std::exp(-4.0 * M_PI * green_eval(p, x));
            CHECK(val == doctest::Approx(direct).epsilon(1e-10));
            CHECK(direct / (d * d) == doctest::Approx(expect).epsilon(1e-2));
        }
        CHECK(f(128, 128) == 0.0);
    }
    SUBCASE("matches the clamped exponential") {
        TorusField f = singular_weight(p, 4.0 * M_PI, g);
        TorusField clamped = sample(g, [&](double x1, double x2) {
            if (theta_dist({x1 - p[0], x2 - p[1]}) < 1e-13) return 0.0;
            double gg = green_eval(p, {x1, x2});
            return std::exp(-4.0 * M_PI * std::min(gg, 700.0 / (4.0 * M_PI)));
        });
        clamped -= f;
        CHECK(std::abs(integrate(clamped)) <= 1e-4);
    }
    SUBCASE("quartic vanishing at the doubled exponent") {
        TorusField f = singular_weight(p, 8.0 * M_PI, g);
        CHECK(f(128, 128) == 0.0);
        CHECK(f(129, 128) <= 1e-7);
    }
    SUBCASE("continuous across the periodic seam") {
        TorusField f = singular_weight({0.31, 0.57}, 4.0 * M_PI, g);
        double seam_jump = 0.0, interior_jump = 0.0;
        for (int j = 0; j < g.n; ++j) {
            seam_jump = std::max(seam_jump, std::abs(f(0, j) - f(g.n - 1, j)));
            interior_jump = std::max(interior_jump, std::abs(f(100, j) - f(101, j)));
        }
        CHECK(seam_jump <= 2.0 * interior_jump);
    }
    SUBCASE("nonpositive exponent refused") {
        CHECK_THROWS_AS(singular_weight(p, 0.0, g), std::invalid_argument);
    }
}

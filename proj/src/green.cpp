#include "mft/green.hpp"

#include <cmath>
#include <complex>
#include <stdexcept>

namespace mft {

namespace {

using cd = std::complex<double>;

constexpr double kNome = 0.0432139182637723;  // e^{-pi}

// theta_1 and derivatives at v, lattice tau = i.  The series in
// sin((2n+1)v) converges like e^{-pi n^2} for |Im v| <= pi/2.
cd theta1(cd v) {
    cd s = 0.0;
    double sign = 1.0;
    for (int n = 0; n <= 8; ++n) {
        double a = std::pow(kNome, (n + 0.5) * (n + 0.5));
        s += sign * a * std::sin(double(2 * n + 1) * v);
        sign = -sign;
    }
    return 2.0 * s;
}

cd theta1_d1(cd v) {
    cd s = 0.0;
    double sign = 1.0;
    for (int n = 0; n <= 8; ++n) {
        double m = 2 * n + 1;
        double a = std::pow(kNome, (n + 0.5) * (n + 0.5));
        s += sign * a * m * std::cos(m * v);
        sign = -sign;
    }
    return 2.0 * s;
}

cd theta1_d2(cd v) {
    cd s = 0.0;
    double sign = 1.0;
    for (int n = 0; n <= 8; ++n) {
        double m = 2 * n + 1;
        double a = std::pow(kNome, (n + 0.5) * (n + 0.5));
        s += -sign * a * m * m * std::sin(m * v);
        sign = -sign;
    }
    return 2.0 * s;
}

double theta1_prime0() {
    // 2 q^{1/4} prod (1-q^{2n})^3
    double p = 1.0;
    for (int n = 1; n <= 12; ++n) p *= std::pow(1.0 - std::pow(kNome, 2 * n), 3);
    return 2.0 * std::pow(kNome, 0.25) * p;
}

// sum log(1 - e^{-2 pi n}); equals the integral of log|theta1(pi z)| over
// the unit cell
double log_theta_mean() {
    double s = 0.0;
    for (int n = 1; n <= 12; ++n) s += std::log1p(-std::exp(-2.0 * M_PI * n));
    return s;
}

inline double reduce(double t) { return t - std::round(t); }

inline Vec2 reduced_diff(const Vec2& p, const Vec2& x) {
    return {reduce(x[0] - p[0]), reduce(x[1] - p[1])};
}

// mean offset making the integral of G vanish exactly
double mean_constant() {
    static const double c = log_theta_mean() / (2.0 * M_PI) - 1.0 / 24.0;
    return c;
}

}  // namespace

double theta_dist(const Vec2& z_in) {
    Vec2 z{reduce(z_in[0]), reduce(z_in[1])};
    static const double norm = M_PI * theta1_prime0();
    cd v = M_PI * cd(z[0], z[1]);
    return std::abs(theta1(v)) * std::exp(-M_PI * z[1] * z[1]) / norm;
}

double green_eval(const Vec2& p, const Vec2& x) {
    Vec2 z = reduced_diff(p, x);
    cd v = M_PI * cd(z[0], z[1]);
    double a = std::abs(theta1(v));
    if (a < 1e-14) throw std::runtime_error("green function evaluated at its pole");
    return -std::log(a) / (2.0 * M_PI) + 0.5 * z[1] * z[1] + mean_constant();
}

Vec2 green_grad(const Vec2& p, const Vec2& x) {
    Vec2 z = reduced_diff(p, x);
    cd v = M_PI * cd(z[0], z[1]);
    cd t = theta1(v);
    if (std::abs(t) < 1e-14) throw std::runtime_error("green function evaluated at its pole");
    cd w = theta1_d1(v) / t;
    return {-0.5 * w.real(), 0.5 * w.imag() + z[1]};
}

std::array<double, 4> green_hess(const Vec2& p, const Vec2& x) {
    Vec2 z = reduced_diff(p, x);
    cd v = M_PI * cd(z[0], z[1]);
    cd t = theta1(v);
    if (std::abs(t) < 1e-14) throw std::runtime_error("green function evaluated at its pole");
    cd w = theta1_d1(v) / t;
    cd a = M_PI * M_PI * (theta1_d2(v) / t - w * w);  // (log theta(pi z))''
    double s = -1.0 / (2.0 * M_PI);
    return {s * a.real(), -s * a.imag(), -s * a.imag(), -s * a.real() + 1.0};
}

double green_regular_constant() {
    static const double r =
        mean_constant() - std::log(M_PI * theta1_prime0()) / (2.0 * M_PI);
    return r;
}

double green_regular(const Vec2& p, const Vec2& x) {
    Vec2 z = reduced_diff(p, x);
    double d = theta_dist(z);
    if (d < 1e-14) return green_regular_constant();  // removable at the pole
    return green_eval(p, x) + std::log(d) / (2.0 * M_PI);
}

Vec2 green_regular_grad_diag(const Vec2&) {
    // R(x,p) is constant on the flat torus, so the diagonal map is too
    return {0.0, 0.0};
}

double green_log_ratio(const Vec2& z_in) {
    Vec2 z{reduce(z_in[0]), reduce(z_in[1])};
    double rr = z[0] * z[0] + z[1] * z[1];
    // dist(z) = |z| e^{-pi |z|^2/2 + ...}, so the ratio is |z|^2/4 + O(|z|^4)
    if (rr < 1e-12) return 0.25 * rr;
    return 0.5 * std::log(rr / (theta_dist(z) * theta_dist(z))) / (2.0 * M_PI);
}

TorusField singular_weight(const Vec2& p, double c, TorusGrid grid) {
    if (c <= 0) throw std::invalid_argument("weight exponent must be positive");
    double e = c / (2.0 * M_PI);
    double amp = std::exp(-c * green_regular_constant());
    return sample(grid, [&](double x1, double x2) {
        double d = theta_dist({x1 - p[0], x2 - p[1]});
        return std::pow(d, e) * amp;
    });
}

TorusField green_spectral_field(const Vec2& p, TorusGrid grid) {
    int n = grid.n;
    int i0 = int(std::lround(p[0] * n)) & (n - 1);
    int j0 = int(std::lround(p[1] * n)) & (n - 1);
    // Delta G = 1 - delta_p, Dirac as nearest-node indicator times n^2
    TorusField rhs(grid);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) rhs.at(i, j) = 1.0;
    rhs.at(i0, j0) -= double(n) * n;
    return solve_poisson(rhs);
}

double log_dist_integral() {
    static const double v =
        log_theta_mean() - M_PI / 12.0 - std::log(M_PI * theta1_prime0());
    return v;
}

double green_mean_quadrature(const Vec2& p, TorusGrid grid) {
    // G + (1/2pi) log dist is smooth and periodic, so the grid rule is
    // spectrally accurate on it; the log part is integrated exactly.
    TorusField smooth = sample(grid, [&](double x1, double x2) {
        Vec2 x{x1, x2};
        double d = theta_dist({x1 - p[0], x2 - p[1]});
        if (d < 1e-14) return green_regular_constant();
        return green_eval(p, x) + std::log(d) / (2.0 * M_PI);
    });
    return integrate(smooth) - log_dist_integral() / (2.0 * M_PI);
}

}  // namespace mft

#include "mft/bubble.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <stdexcept>

namespace mft {

namespace {

// quintic smoothstep; used for every cutoff so all assembled fields are C^2
double smoothstep(double t) {
    if (t <= 0.0) return 0.0;
    if (t >= 1.0) return 1.0;
    return t * t * t * (10.0 + t * (-15.0 + 6.0 * t));
}

// 1 below a, 0 above b
double cutoff(double r, double a, double b) {
    return 1.0 - smoothstep((r - a) / (b - a));
}

double reduce(double t) { return t - std::round(t); }

Vec2 reduced_diff(const Vec2& x, const Vec2& p) {
    return {reduce(x[0] - p[0]), reduce(x[1] - p[1])};
}

double norm2(const Vec2& v) { return std::hypot(v[0], v[1]); }

LogGrid make_grid(double r_min, double r_max, int per_decade) {
    int n = int(std::ceil(per_decade * std::log10(r_max / r_min))) + 1;
    return LogGrid(r_min, r_max, n);
}

// weight of the linearized profile operator in the blown-up variable
std::vector<double> profile_weight(const LogGrid& g, double rho1, double h_p,
                                   double alpha) {
    double c = rho1 * h_p / (4.0 * (1.0 + alpha) * (1.0 + alpha));
    std::vector<double> W(g.size());
    for (int i = 0; i < g.size(); ++i) {
        double r = g.r[i];
        double den = 1.0 + c * std::pow(r, 2.0 * (1.0 + alpha));
        W[i] = 2.0 * rho1 * h_p * std::pow(r, 2.0 * alpha) / (den * den);
    }
    return W;
}

}  // namespace

double lambda_of_rho(double delta_rho, double c, double alpha) {
    if (delta_rho == 0.0 || c == 0.0 || (delta_rho > 0) != (c > 0))
        throw std::runtime_error(
            "no blow-up branch: parameter offset and coefficient differ in sign");
    double target = delta_rho / c;
    double ap = 1.0 + alpha;
    double peak = ap / M_E;  // max of lambda e^{-lambda/(1+alpha)} at lambda = 1+alpha
    if (target > peak)
        throw std::runtime_error("no root: parameter offset beyond the fold point");
    auto g = [ap](double l) { return l * std::exp(-l / ap); };
    double lo = ap, hi = 2.0 * ap;
    while (g(hi) > target) hi *= 2.0;
    while (hi - lo > 1e-12) {
        double mid = 0.5 * (lo + hi);
        (g(mid) > target ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

double d_coefficient(double alpha, double rho1, double h_p, double bracket) {
    double ap = 1.0 + alpha;
    double s = std::sin(M_PI / ap);
    if (std::abs(s) < 1e-9)
        throw std::runtime_error("matching coefficient undefined at integer weight");
    return M_PI / (ap * s) * std::pow(4.0 * ap * ap / (rho1 * h_p), 1.0 / ap) * bracket;
}

RadialProfile solve_zeta(double alpha, ZetaMode mode, const ZetaParams& par) {
    if (alpha < 0.0) throw std::invalid_argument("weight must be nonnegative");
    LogGrid g = make_grid(par.r_min, par.r_max, par.points_per_decade);
    std::vector<double> W = profile_weight(g, par.rho1, par.h_p, alpha);
    const int n = g.size();

    auto certify = [&](RadialProfile& p, int m, const std::vector<double>& f) {
        if (radial_residual(p, m, W, f) > 1e-8)
            throw std::runtime_error("matching failure: correction solve lost accuracy");
        return p;
    };

    // first-order correction: angular mode 1, forcing e1 r, decaying like
    // r^{-2 alpha - 1}; the inner power excludes the translation kernel
    auto first_order = [&]() {
        std::vector<double> f(n);
        for (int i = 0; i < n; ++i) f[i] = par.e1 * g.r[i];
        RadialProfile p = solve_radial_bvp(g, 1, W, f, 3.0 + 2.0 * alpha,
                                           OuterBC::power(2.0 * alpha + 1.0));
        return certify(p, 1, f);
    };

    if (mode == ZetaMode::Zeta1) return first_order();

    // second-order correction; the square of the first-order response feeds
    // the angular modes 0 and 2
    std::vector<double> phi(n, 0.0);
    if (par.e1 != 0.0) {
        RadialProfile z1 = first_order();
        phi = z1.v;
    }
    std::vector<double> f(n);
    if (par.angular == 0) {
        double tr = par.quad[0] + par.quad[2];
        for (int i = 0; i < n; ++i) {
            double l = par.e1 * g.r[i] + phi[i];
            f[i] = 0.25 * tr * g.r[i] * g.r[i] + 0.25 * l * l;
        }
        RadialProfile p =
            solve_radial_bvp(g, 0, W, f, 4.0 + 2.0 * alpha, OuterBC::free_log());
        return certify(p, 0, f);
    }
    if (par.angular != 2) throw std::invalid_argument("angular mode must be 0 or 2");
    if (par.sine) {
        for (int i = 0; i < n; ++i) f[i] = 0.5 * par.quad[1] * g.r[i] * g.r[i];
    } else {
        double df = par.quad[0] - par.quad[2];
        for (int i = 0; i < n; ++i) {
            double l = par.e1 * g.r[i] + phi[i];
            f[i] = 0.25 * df * g.r[i] * g.r[i] + 0.25 * l * l;
        }
    }
    RadialProfile p = solve_radial_bvp(g, 2, W, f, 4.0 + 2.0 * alpha,
                                       OuterBC::power(2.0 * alpha));
    return certify(p, 2, f);
}

double EtaProfile::eval(double r, double theta) const {
    double s = 0.0;
    for (size_t k = 0; k < cos_m.size(); ++k)
        s += cos_m[k].eval(r) * std::cos(double(k) * theta);
    for (size_t k = 0; k < sin_m.size(); ++k)
        s += sin_m[k].eval(r) * std::sin(double(k + 1) * theta);
    return s;
}

EtaProfile solve_eta(double rho1, double lambda, double h_q,
                     const std::function<double(double, double)>& J, double r_max,
                     int kmax, int points_per_decade) {
    double c = rho1 * h_q / 4.0;
    double core = 1.0 / std::sqrt(c * std::exp(lambda));
    double r_min = std::max(1e-12, 1e-4 * core);
    LogGrid g = make_grid(r_min, r_max, points_per_decade);
    const int n = g.size();

    std::vector<double> W(n);
    for (int i = 0; i < n; ++i) {
        double den = 1.0 + c * std::exp(lambda) * g.r[i] * g.r[i];
        W[i] = 2.0 * rho1 * h_q * std::exp(lambda) / (den * den);
    }

    // angular decomposition of the forcing by the trapezoid rule
    const int na = std::max(64, 8 * kmax);
    std::vector<std::vector<double>> fc(kmax + 1, std::vector<double>(n, 0.0));
    std::vector<std::vector<double>> fs(kmax, std::vector<double>(n, 0.0));
    for (int i = 0; i < n; ++i) {
        for (int a = 0; a < na; ++a) {
            double th = 2.0 * M_PI * a / na;
            double v = J(g.r[i], th);
            fc[0][i] += v / na;
            for (int k = 1; k <= kmax; ++k) {
                fc[k][i] += 2.0 * v * std::cos(k * th) / na;
                fs[k - 1][i] += 2.0 * v * std::sin(k * th) / na;
            }
        }
    }

    EtaProfile out;
    out.cos_m.push_back(solve_radial_bvp(g, 0, W, fc[0], 2.0, OuterBC::free_log()));
    for (int k = 1; k <= kmax; ++k) {
        out.cos_m.push_back(solve_radial_bvp(g, k, W, fc[k], double(k + 2),
                                             OuterBC::power(double(k))));
        out.sin_m.push_back(solve_radial_bvp(g, k, W, fs[k - 1], double(k + 2),
                                             OuterBC::power(double(k))));
    }
    return out;
}

double BubbleProblem::h1_eval(const Vec2& x) const {
    double v = h1_smooth.eval(x);
    double Rp = green_regular_constant();
    for (const auto& [q, a] : singular) {
        Vec2 z = reduced_diff(x, q);
        v *= std::pow(theta_dist(z), 2.0 * a) * std::exp(-4.0 * M_PI * a * Rp);
    }
    return v;
}

namespace {

// local expansion data of the interaction field at one bubble point
struct LocalData {
    double h_p = 0.0;
    Vec2 evec{0.0, 0.0};
    std::array<double, 4> A{};  // row-major Hessian
};

// interaction field seen by point j: the smooth weight, the shadow field,
// the other points' tails, and the regularized self-tail
LocalData local_expansion(int j, const BubbleParams& par, const ShadowState& shadow,
                          const TorusField& logh,
                          const std::array<TorusField, 2>& logh_grad,
                          const std::array<TorusField, 4>& logh_hess,
                          const std::array<TorusField, 2>& w_grad,
                          const std::array<TorusField, 4>& w_hess) {
    const Vec2 p = par.points[j];
    const double ap = 1.0 + par.alphas[j];
    const double Rp = green_regular_constant();

    LocalData out;
    double logh_p = logh.eval(p) - 0.5 * shadow.w.eval(p) - 4.0 * M_PI * par.alphas[j] * Rp;
    out.evec = {logh_grad[0].eval(p) - 0.5 * w_grad[0].eval(p),
                logh_grad[1].eval(p) - 0.5 * w_grad[1].eval(p)};
    for (int k = 0; k < 4; ++k) out.A[k] = logh_hess[k].eval(p) - 0.5 * w_hess[k].eval(p);
    // the regularized self-tail contributes (1/2) I per unit coefficient
    double self = 8.0 * M_PI * ap - 4.0 * M_PI * par.alphas[j];
    out.A[0] += 0.5 * self;
    out.A[3] += 0.5 * self;

    for (size_t i = 0; i < par.points.size(); ++i) {
        if (int(i) == j) continue;
        double coeff = 8.0 * M_PI * (1.0 + par.alphas[i]);
        if (int(i) >= par.m) {
            // the other point's weight factor combines with its profile tail
            coeff -= 4.0 * M_PI * par.alphas[i];
            logh_p += -4.0 * M_PI * par.alphas[i] * green_eval(par.points[i], p);
        }
        Vec2 g = green_grad(par.points[i], p);
        std::array<double, 4> H = green_hess(par.points[i], p);
        out.evec[0] += coeff * g[0];
        out.evec[1] += coeff * g[1];
        for (int k = 0; k < 4; ++k) out.A[k] += coeff * H[k];
    }
    out.h_p = std::exp(logh_p);
    return out;
}

double mean_profile_quadrature(double lambda, double alpha, double s, double eta_eps2,
                               const RadialProfile* eta0, double eps, double c,
                               double r0) {
    // torus mean of one single-point profile; only the radial parts survive
    // the angular average, and the far tail cancels against the mean-zero
    // Green function leaving 4(1+alpha) log r - 8 pi (1+alpha) R0
    const double ap = 1.0 + alpha;
    const double Rp = green_regular_constant();
    const double r_lo = 1e-9;
    LogGrid g(r_lo, 2.0 * r0, int(std::ceil(300.0 * std::log10(2.0 * r0 / r_lo))) + 1);
    auto f = [&](double r) {
        double u = lambda - 2.0 * std::log1p(c * std::exp(lambda) * std::pow(r, 2.0 * ap));
        double eta = eta0 ? eta_eps2 * eta0->eval(r / eps) : 0.0;
        return cutoff(r, r0, 2.0 * r0) *
               (u + eta + s + 4.0 * ap * std::log(r) - 8.0 * M_PI * ap * Rp);
    };
    double acc = 0.0;
    for (int i = 0; i + 1 < g.size(); ++i) {
        double dl = std::log(g.r[i + 1] / g.r[i]);
        acc += 0.5 * dl * (f(g.r[i]) * g.r[i] * g.r[i] + f(g.r[i + 1]) * g.r[i + 1] * g.r[i + 1]);
    }
    // disc below the first node, constant-plus-log integrand
    double a0 = lambda + s - 8.0 * M_PI * ap * Rp;
    acc += r_lo * r_lo * (0.5 * a0 + 4.0 * ap * (0.5 * std::log(r_lo) - 0.25));
    return 2.0 * M_PI * acc;
}

}  // namespace

AssembledBubble assemble_bubble(const BubbleParams& par, const ShadowState& shadow,
                                const BubbleProblem& prob, TorusGrid grid) {
    const size_t n = par.points.size();
    if (par.alphas.size() != n || par.lambdas.size() != n || par.amps.size() != n)
        throw std::invalid_argument("per-point arrays must have one entry per point");
    if (par.m < 0 || size_t(par.m) > n || n - par.m != prob.singular.size())
        throw std::invalid_argument("points must list the free ones, then every singular one");
    if (!shadow.converged) throw std::runtime_error("shadow state is not converged");
    if (!(par.rho1 > 0.0)) throw std::invalid_argument("first parameter must be positive");
    if (!(par.r0 > 0.0) || 2.0 * par.r0 > 0.25)
        throw std::invalid_argument("cutoff radius must satisfy 0 < 2 r0 <= 1/4");
    if (!(shadow.w.grid() == grid) || !(prob.h1_smooth.grid() == grid))
        throw std::invalid_argument("shadow field, weight and bubble grid must agree");
    if (shadow.points.size() != size_t(par.m))
        throw std::invalid_argument("free points must match the shadow state");

    for (size_t j = 0; j < n; ++j) {
        if (int(j) < par.m) {
            if (par.alphas[j] != 0.0)
                throw std::invalid_argument("free points carry weight zero");
        } else {
            bool matched = false;
            for (const auto& [q, a] : prob.singular)
                if (norm2(reduced_diff(par.points[j], q)) < 1e-9 &&
                    std::abs(par.alphas[j] - a) < 1e-12)
                    matched = true;
            if (!matched)
                throw std::invalid_argument("singular points must sit on the singular set");
        }
        if (par.lambdas[j] < 5.0)
            throw std::invalid_argument("heights below 5 are outside the asymptotic regime");
        if (std::abs(par.amps[j] - 1.0) > 0.1)
            throw std::invalid_argument("amplitudes must stay within 0.1 of 1");
        double eps = std::exp(-par.lambdas[j] / (2.0 * (1.0 + par.alphas[j])));
        if (eps < 1.0 / (16.0 * grid.n))
            throw std::runtime_error("bubble core below the grid resolution ceiling");
        for (size_t i = 0; i < j; ++i)
            if (norm2(reduced_diff(par.points[j], par.points[i])) < 2.0 * par.r0)
                throw std::runtime_error("cutoff discs overlap");
    }

    // spectral derivatives of the smooth weight and the shadow field
    TorusField logh(grid);
    for (int i = 0; i < grid.n; ++i)
        for (int jj = 0; jj < grid.n; ++jj) {
            double v = prob.h1_smooth(i, jj);
            if (!(v > 0.0)) throw std::invalid_argument("smooth weight must be positive");
            logh.at(i, jj) = std::log(v);
        }
    auto [lgx, lgy] = gradient(logh);
    auto [lgxx, lgxy] = gradient(lgx);
    auto [lgyx, lgyy] = gradient(lgy);
    auto [wx, wy] = gradient(shadow.w);
    auto [wxx, wxy] = gradient(wx);
    auto [wyx, wyy] = gradient(wy);
    std::array<TorusField, 2> logh_grad{lgx, lgy}, w_grad{wx, wy};
    std::array<TorusField, 4> logh_hess{lgxx, lgxy, lgyx, lgyy};
    std::array<TorusField, 4> w_hess{wxx, wxy, wyx, wyy};

    AssembledBubble b{par, {}, TorusField(grid), {}, {}, {}, {}, &prob};
    MatchingConstants& mc = b.consts;
    auto resize = [&](std::vector<double>& v) { v.assign(n, 0.0); };
    resize(mc.s); resize(mc.d); resize(mc.t); resize(mc.g_star); resize(mc.vbar);
    resize(mc.h_p); resize(mc.e1); resize(mc.rot); resize(mc.bracket);
    mc.quad.assign(n, {0.0, 0.0, 0.0});
    b.zeta1.resize(n); b.zeta2_m0.resize(n); b.zeta2_c2.resize(n); b.zeta2_s2.resize(n);

    const double Rp = green_regular_constant();
    for (size_t j = 0; j < n; ++j) {
        LocalData loc = local_expansion(int(j), par, shadow, logh, logh_grad,
                                        logh_hess, w_grad, w_hess);
        const double alpha = par.alphas[j], ap = 1.0 + alpha, lam = par.lambdas[j];
        mc.h_p[j] = loc.h_p;
        mc.e1[j] = norm2(loc.evec);
        mc.rot[j] = mc.e1[j] > 1e-14 ? std::atan2(loc.evec[1], loc.evec[0]) : 0.0;
        // rotate the quadratic term into the frame where the linear one
        // points along +y1
        double cth = std::cos(mc.rot[j]), sth = std::sin(mc.rot[j]);
        auto rotate = [&](const std::array<double, 4>& A) {
            std::array<double, 4> B;
            B[0] = cth * (A[0] * cth + A[1] * sth) + sth * (A[2] * cth + A[3] * sth);
            B[1] = cth * (-A[0] * sth + A[1] * cth) + sth * (-A[2] * sth + A[3] * cth);
            B[2] = -sth * (A[0] * cth + A[1] * sth) + cth * (A[2] * cth + A[3] * sth);
            B[3] = -sth * (-A[0] * sth + A[1] * cth) + cth * (-A[2] * sth + A[3] * cth);
            return B;
        };
        std::array<double, 4> Ar = rotate(loc.A);
        mc.bracket[j] = Ar[0] + Ar[3];
        mc.quad[j] = {Ar[0], 0.5 * (Ar[1] + Ar[2]), Ar[3]};

        if (int(j) >= par.m) {
            mc.d[j] = d_coefficient(alpha, par.rho1, loc.h_p, mc.bracket[j]);
            ZetaParams zp;
            zp.rho1 = par.rho1;
            zp.h_p = loc.h_p;
            zp.e1 = mc.e1[j];
            zp.quad = mc.quad[j];
            ZetaParams zp_m0 = zp, zp_c2 = zp, zp_s2 = zp;
            zp_m0.angular = 0;
            zp_c2.angular = 2;
            zp_s2.angular = 2;
            zp_s2.sine = true;
            // the four correction profiles are independent; solve them in
            // parallel
            auto f1 = std::async(std::launch::async, solve_zeta, alpha,
                                 ZetaMode::Zeta1, zp);
            auto f2 = std::async(std::launch::async, solve_zeta, alpha,
                                 ZetaMode::Zeta2, zp_m0);
            auto f3 = std::async(std::launch::async, solve_zeta, alpha,
                                 ZetaMode::Zeta2, zp_c2);
            auto f4 = std::async(std::launch::async, solve_zeta, alpha,
                                 ZetaMode::Zeta2, zp_s2);
            b.zeta1[j] = f1.get();
            b.zeta2_m0[j] = f2.get();
            b.zeta2_c2[j] = f3.get();
            b.zeta2_s2[j] = f4.get();
        }

        double c = par.rho1 * loc.h_p / (4.0 * ap * ap);
        mc.s[j] = lam + 2.0 * std::log(c) + 8.0 * M_PI * ap * Rp +
                  mc.d[j] * lam * std::exp(-lam / ap) / (2.0 * ap);
        double eps = std::exp(-lam / (2.0 * ap));
        mc.vbar[j] = mean_profile_quadrature(lam, alpha, mc.s[j], eps * eps,
                                             int(j) >= par.m ? &b.zeta2_m0[j] : nullptr,
                                             eps, c, par.r0);
        mc.g_star[j] = 8.0 * M_PI * ap * Rp;
        for (size_t i = 0; i < n; ++i)
            if (i != j)
                mc.g_star[j] += 8.0 * M_PI * (1.0 + par.alphas[i]) *
                                green_eval(par.points[i], par.points[j]);
    }

    double vbar_sum = 0.0;
    for (size_t i = 0; i < n; ++i) vbar_sum += mc.vbar[i];
    for (size_t j = 0; j < n; ++j)
        mc.t[j] = mc.s[j] + (mc.g_star[j] - 8.0 * M_PI * (1.0 + par.alphas[j]) * Rp) - vbar_sum;

    double amax = 0.0;
    for (size_t j = par.m; j < n; ++j) amax = std::max(amax, par.alphas[j]);
    if (size_t(par.m) < n) {
        for (size_t j = par.m; j < n; ++j)
            if (par.alphas[j] >= amax - 1e-12) mc.j2.push_back(int(j));
    } else {
        for (size_t j = 0; j < n; ++j) mc.j2.push_back(int(j));
    }

    b.field = sample(grid, [&](double x1, double x2) { return b.eval({x1, x2}); });
    return b;
}

double AssembledBubble::eval_single(int j, const Vec2& x) const {
    const Vec2 p = params.points[j];
    const double alpha = params.alphas[j], ap = 1.0 + alpha, lam = params.lambdas[j];
    const Vec2 z = reduced_diff(x, p);
    const double r = norm2(z);
    if (r >= 2.0 * params.r0) return 8.0 * M_PI * ap * green_eval(p, x);

    double c = params.rho1 * consts.h_p[j] / (4.0 * ap * ap);
    double u = lam - 2.0 * std::log1p(c * std::exp(lam) * std::pow(r, 2.0 * ap));
    double eta = 0.0;
    if (j >= params.m) {
        double eps = std::exp(-lam / (2.0 * ap));
        double y = r / eps, th = std::atan2(z[1], z[0]) - consts.rot[j];
        eta = eps * zeta1[j].eval(y) * std::cos(th) +
              eps * eps * (zeta2_m0[j].eval(y) + zeta2_c2[j].eval(y) * std::cos(2.0 * th) +
                           zeta2_s2[j].eval(y) * std::sin(2.0 * th));
    }
    double core = u + eta + 8.0 * M_PI * ap * green_log_ratio(z) + consts.s[j];
    if (r <= params.r0) return core;
    double sig = cutoff(r, params.r0, 2.0 * params.r0);
    return sig * core + (1.0 - sig) * 8.0 * M_PI * ap * green_eval(p, x);
}

double AssembledBubble::eval(const Vec2& x) const {
    double v = 0.0;
    for (size_t j = 0; j < params.points.size(); ++j)
        v += params.amps[j] * (eval_single(int(j), x) - consts.vbar[j]);
    return v;
}

namespace {

// disc radii of the polar quadrature patches; they shrink when points get
// close so the patches never touch
std::vector<double> patch_radii(const BubbleParams& par) {
    const size_t n = par.points.size();
    std::vector<double> R(n, 2.0 * par.r0);
    for (size_t j = 0; j < n; ++j)
        for (size_t i = 0; i < n; ++i)
            if (i != j) {
                Vec2 z{reduce(par.points[j][0] - par.points[i][0]),
                       reduce(par.points[j][1] - par.points[i][1])};
                R[j] = std::min(R[j], 0.45 * std::hypot(z[0], z[1]));
            }
    return R;
}

}  // namespace

double bubble_mass_integral(const AssembledBubble& b, const ShadowState& shadow) {
    const BubbleParams& par = b.params;
    const BubbleProblem& prob = *b.prob;
    const TorusGrid grid = b.field.grid();
    if (!(shadow.w.grid() == grid))
        throw std::invalid_argument("shadow field must live on the bubble grid");
    const size_t n = par.points.size();
    const double Rp = green_regular_constant();
    const std::vector<double> Rpatch = patch_radii(par);

    double cbase = std::log(par.rho1);
    for (const auto& [q, a] : prob.singular) cbase += -4.0 * M_PI * a * Rp;
    for (size_t i = 0; i < n; ++i) cbase -= par.amps[i] * b.consts.vbar[i];

    // far region: trapezoid on the grid against the complement of the
    // patch bumps; the weight zeros at the singular nodes kill the
    // integrand there exactly
    TorusField h1full = prob.h1_smooth;
    for (const auto& [q, a] : prob.singular) {
        TorusField wq = singular_weight(q, 4.0 * M_PI * a, grid);
        for (int i = 0; i < grid.n; ++i)
            for (int jj = 0; jj < grid.n; ++jj) h1full.at(i, jj) *= wq(i, jj);
    }
    double grid_sum = 0.0;
    for (int i = 0; i < grid.n; ++i)
        for (int jj = 0; jj < grid.n; ++jj) {
            Vec2 x{i * grid.spacing(), jj * grid.spacing()};
            double wfac = 1.0;
            for (size_t k = 0; k < n; ++k) {
                double r = norm2(reduced_diff(x, par.points[k]));
                wfac -= cutoff(r, 0.5 * Rpatch[k], Rpatch[k]);
            }
            if (wfac <= 1e-14) continue;
            grid_sum += h1full(i, jj) *
                        std::exp(b.field(i, jj) - 0.5 * shadow.w(i, jj)) * wfac;
        }
    double total = par.rho1 * grid.cell_area() * grid_sum;

    // near regions: per-point polar log-radial rule; the smooth part of the
    // exponent is tabulated on a coarse radial subgrid and interpolated
    SparseSpectral sp_w(shadow.w);
    TorusField logh(grid);
    for (int i = 0; i < grid.n; ++i)
        for (int jj = 0; jj < grid.n; ++jj)
            logh.at(i, jj) = std::log(prob.h1_smooth(i, jj));
    SparseSpectral sp_logh(logh);

    const int na = 32;
    const double r_lo = 1e-10;
    for (size_t j = 0; j < n; ++j) {
        const Vec2 p = par.points[j];
        const double alpha = par.alphas[j];
        const int nc = int(std::ceil(40.0 * std::log10(Rpatch[j] / r_lo)));
        const int nf = 8 * nc + 1;
        LogGrid gf(r_lo, Rpatch[j], nf);
        const double dl = std::log(Rpatch[j] / r_lo) / (nf - 1);

        double patch = 0.0, inner = 0.0;
        for (int a = 0; a < na; ++a) {
            double th = 2.0 * M_PI * a / na;
            double ct = std::cos(th), st = std::sin(th);
            std::vector<double> Sc(nc + 1);
            for (int k = 0; k <= nc; ++k) {
                double r = gf.r[8 * k];
                Vec2 x{p[0] + r * ct, p[1] + r * st};
                double S = sp_logh.eval(x) - 0.5 * sp_w.eval(x);
                for (size_t q = 0; q < prob.singular.size(); ++q) {
                    if (par.m + q == j) continue;
                    S += 2.0 * prob.singular[q].second *
                         std::log(theta_dist(reduced_diff(x, prob.singular[q].first)));
                }
                for (size_t i = 0; i < n; ++i)
                    if (i != j)
                        S += par.amps[i] * 8.0 * M_PI * (1.0 + par.alphas[i]) *
                             green_eval(par.points[i], x);
                Sc[k] = S;
            }
            double acc = 0.0;
            for (int i = 0; i < nf; ++i) {
                double r = gf.r[i];
                int k = i / 8, frac = i % 8;
                double S = frac == 0 ? Sc[k]
                                     : Sc[k] * (1.0 - frac / 8.0) + Sc[k + 1] * (frac / 8.0);
                Vec2 z{r * ct, r * st};
                double local = par.amps[j] * b.eval_single(int(j), {p[0] + z[0], p[1] + z[1]});
                if (alpha > 0.0)
                    local += 2.0 * alpha * std::log(r) - 4.0 * M_PI * alpha * green_log_ratio(z);
                double f = std::exp(cbase + S + local);
                double wq = (i == 0 || i == nf - 1) ? 0.5 : 1.0;
                acc += wq * f * cutoff(r, 0.5 * Rpatch[j], Rpatch[j]) * r * r * dl;
                if (i == 0) inner += f * r_lo * r_lo / (2.0 + 2.0 * alpha);
            }
            patch += acc;
        }
        total += (patch + inner) * 2.0 * M_PI / na;
    }
    return total;
}

MassReport mass_expansion_check(const AssembledBubble& b, const ShadowState& shadow,
                                const std::vector<double>& psi_at_points) {
    const BubbleParams& par = b.params;
    const size_t n = par.points.size();
    std::vector<double> psi = psi_at_points;
    if (psi.empty()) psi.assign(n, 0.0);
    if (psi.size() != n)
        throw std::invalid_argument("second-component values must match the points");

    MassReport rep;
    rep.lhs = bubble_mass_integral(b, shadow);
    rep.term_point.assign(n, 0.0);
    rep.term_eta.assign(n, 0.0);
    rep.term_amp.assign(n, 0.0);
    for (size_t j = 0; j < n; ++j) {
        double ap = 1.0 + par.alphas[j], et = std::exp(b.consts.t[j]);
        rep.term_point[j] = 4.0 * M_PI * ap * et * (1.0 - psi[j]);
        rep.term_amp[j] = 8.0 * M_PI * ap * par.lambdas[j] * (par.amps[j] - 1.0) * et;
    }
    for (int j : b.consts.j2)
        if (j >= par.m)
            rep.term_eta[j] = M_PI * b.consts.d[j] * std::exp(b.consts.t[j]) *
                              std::exp(-par.lambdas[j] / (1.0 + par.alphas[j]));
    for (size_t j = 0; j < n; ++j)
        rep.main_terms += rep.term_point[j] + rep.term_eta[j] + rep.term_amp[j];
    rep.rel_discrepancy = std::abs(rep.lhs - rep.main_terms) / std::abs(rep.main_terms);
    return rep;
}

double eta_flux_quadrature(const AssembledBubble& b, int j) {
    const BubbleParams& par = b.params;
    if (j < par.m)
        throw std::invalid_argument("no correction profile on a free point");
    const double alpha = par.alphas[j], ap = 1.0 + alpha, lam = par.lambdas[j];
    const double h_p = b.consts.h_p[j], e1 = b.consts.e1[j];
    const auto& A = b.consts.quad[j];
    const double c = par.rho1 * h_p / (4.0 * ap * ap);
    const double eps = std::exp(-lam / (2.0 * ap));

    const double r_lo = 1e-10;
    const int nr = int(std::ceil(300.0 * std::log10(par.r0 / r_lo))) + 1;
    LogGrid g(r_lo, par.r0, nr);
    const double dl = std::log(par.r0 / r_lo) / (nr - 1);
    const int na = 64;

    double acc = 0.0;
    for (int a = 0; a < na; ++a) {
        double th = 2.0 * M_PI * a / na;  // already measured from the rotated axis
        double ct = std::cos(th), st = std::sin(th);
        for (int i = 0; i < nr; ++i) {
            double r = g.r[i], y = r / eps;
            double eta = eps * b.zeta1[j].eval(y) * ct +
                         eps * eps * (b.zeta2_m0[j].eval(y) +
                                      b.zeta2_c2[j].eval(y) * std::cos(2.0 * th) +
                                      b.zeta2_s2[j].eval(y) * std::sin(2.0 * th));
            double lin = e1 * r * ct;
            double quad = 0.5 * r * r * (A[0] * ct * ct + 2.0 * A[1] * ct * st + A[2] * st * st);
            double F = eta + lin + quad + 0.5 * (eta + lin) * (eta + lin);
            double eu = std::exp(lam) /
                        std::pow(1.0 + c * std::exp(lam) * std::pow(r, 2.0 * ap), 2.0);
            double wq = (i == 0 || i == nr - 1) ? 0.5 : 1.0;
            acc += wq * std::pow(r, 2.0 * alpha) * eu * F * r * r * dl;
        }
    }
    return par.rho1 * h_p * std::exp(b.consts.t[j]) * acc * 2.0 * M_PI / na;
}

double l_Q_eval(const ShadowState& shadow, const BubbleProblem& prob, double rho_star) {
    const TorusGrid grid = shadow.w.grid();
    if (!(prob.h1_smooth.grid() == grid))
        throw std::invalid_argument("weight and shadow field must share a grid");
    TorusField logh(grid);
    for (int i = 0; i < grid.n; ++i)
        for (int jj = 0; jj < grid.n; ++jj)
            logh.at(i, jj) = std::log(prob.h1_smooth(i, jj));
    TorusField logh_lap = apply_laplacian(logh);

    // full point list: movable free points first, then the singular set
    std::vector<Vec2> pts = shadow.points;
    std::vector<double> al(pts.size(), 0.0);
    for (const auto& [q, a] : prob.singular) {
        pts.push_back(q);
        al.push_back(a);
    }
    double nstar = 0.0;
    for (const auto& [q, a] : prob.singular) nstar += 4.0 * M_PI * a;

    // the sum runs over the maximal-weight block, or over the free points
    // when there is no singular set at all
    std::vector<size_t> block;
    if (prob.singular.empty()) {
        for (size_t j = 0; j < pts.size(); ++j) block.push_back(j);
    } else {
        double amax = 0.0;
        for (double a : al) amax = std::max(amax, a);
        for (size_t j = 0; j < pts.size(); ++j)
            if (al[j] >= amax - 1e-12 && al[j] > 0.0) block.push_back(j);
    }

    const double Rp = green_regular_constant();
    double l = 0.0;
    for (size_t j : block) {
        double ap = 1.0 + al[j];
        double logh_p = logh.eval(pts[j]) - 0.5 * shadow.w.eval(pts[j]) -
                        4.0 * M_PI * al[j] * Rp;
        double gstar = 8.0 * M_PI * ap * Rp;
        for (size_t i = 0; i < pts.size(); ++i) {
            if (i == j) continue;
            gstar += 8.0 * M_PI * (1.0 + al[i]) * green_eval(pts[i], pts[j]);
            if (al[i] > 0.0) logh_p += -4.0 * M_PI * al[i] * green_eval(pts[i], pts[j]);
        }
        double bracket = logh_lap.eval(pts[j]) - prob.rho2 + 2.0 * rho_star - nstar;
        l += std::pow(std::exp(logh_p) * rho_star / (4.0 * ap * ap), 1.0 / ap) *
             std::exp(gstar / ap) * bracket;
    }
    return l;
}

std::vector<double> theta_eval(const AssembledBubble& b, double rho_star,
                               const std::vector<double>& psi_at_points) {
    const BubbleParams& par = b.params;
    const size_t n = par.points.size();
    std::vector<double> psi = psi_at_points;
    if (psi.empty()) psi.assign(n, 0.0);
    if (psi.size() != n)
        throw std::invalid_argument("second-component values must match the points");

    double dsum = 0.0, asum = 0.0;
    for (int j = par.m; j < int(n); ++j)
        dsum += M_PI * b.consts.d[j] *
                std::exp(-par.lambdas[j] / (1.0 + par.alphas[j]));
    for (size_t i = 0; i < n; ++i)
        asum += 8.0 * M_PI * (1.0 + par.alphas[i]) * par.lambdas[i] * (par.amps[i] - 1.0);

    std::vector<double> theta(n, 0.0);
    for (size_t j = 0; j < n; ++j) {
        double tsum = 0.0;
        for (size_t i = 0; i < n; ++i)
            tsum += 4.0 * M_PI * (1.0 + par.alphas[i]) *
                    (b.consts.t[i] - b.consts.t[j] - psi[i]);
        theta[j] = ((par.rho1 - rho_star) - dsum - tsum - asum) / rho_star;
    }
    return theta;
}

double rho1_of_lambda(const ShadowState& shadow, const BubbleProblem& prob,
                      double lambda, double r0, TorusGrid grid) {
    if (!prob.singular.empty() || shadow.points.size() != 1)
        throw std::invalid_argument("rate law requires the single free-bubble family");
    auto F = [&](double rho1) {
        BubbleParams par;
        par.points = shadow.points;
        par.alphas = {0.0};
        par.lambdas = {lambda};
        par.amps = {1.0};
        par.rho1 = rho1;
        par.m = 1;
        par.r0 = r0;
        AssembledBubble b = assemble_bubble(par, shadow, prob, grid);
        double mass = bubble_mass_integral(b, shadow);
        return rho1 - std::exp(-b.consts.t[0]) * mass;
    };
    double x0 = 4.0 * M_PI, x1 = 4.0 * M_PI * (1.0 + lambda * std::exp(-lambda));
    double f0 = F(x0), f1 = F(x1);
    for (int it = 0; it < 20; ++it) {
        if (std::abs(f1) < 1e-12 || std::abs(x1 - x0) < 1e-13) break;
        double x2 = x1 - f1 * (x1 - x0) / (f1 - f0);
        x0 = x1; f0 = f1;
        x1 = x2; f1 = F(x1);
    }
    return x1;
}

RateFit rate_law_fit(const ShadowState& shadow, const BubbleProblem& prob,
                     const std::vector<double>& lambdas, double r0, TorusGrid grid) {
    RateFit fit;
    fit.lambdas = lambdas;
    for (double lam : lambdas)
        fit.offsets.push_back(rho1_of_lambda(shadow, prob, lam, r0, grid) - 4.0 * M_PI);

    // least squares against c1 lambda e^{-lambda} + c2 e^{-lambda}, fitted in
    // the scaled variable y = offset e^{lambda} so every height carries the
    // same weight (the raw offsets span orders of magnitude and would let the
    // smallest height dominate the fit)
    double sl = 0, sll = 0, sy = 0, sly = 0;
    const double nk = double(lambdas.size());
    for (size_t k = 0; k < lambdas.size(); ++k) {
        double y = fit.offsets[k] * std::exp(lambdas[k]);
        sl += lambdas[k];
        sll += lambdas[k] * lambdas[k];
        sy += y;
        sly += lambdas[k] * y;
    }
    double det = nk * sll - sl * sl;
    if (std::abs(det) < 1e-300)
        throw std::runtime_error("rate fit needs at least two distinct heights");
    fit.coefficient = (nk * sly - sl * sy) / det;
    double c2 = (sy - fit.coefficient * sl) / nk;
    for (double lam : lambdas)
        fit.predicted.push_back(fit.coefficient * lam * std::exp(-lam) +
                                c2 * std::exp(-lam));

    // local prediction of the same coefficient from the weight at the point
    BubbleParams par;
    par.points = shadow.points;
    par.alphas = {0.0};
    par.lambdas = {lambdas.front()};
    par.amps = {1.0};
    par.rho1 = 4.0 * M_PI;
    par.m = 1;
    par.r0 = r0;
    AssembledBubble b = assemble_bubble(par, shadow, prob, grid);
    fit.analytic = b.consts.bracket[0] / b.consts.h_p[0];
    return fit;
}

}  // namespace mft

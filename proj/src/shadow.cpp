#include "mft/shadow.hpp"

#include "mft/green.hpp"

#include <Eigen/Dense>

#include <cmath>

namespace mft {

namespace {

constexpr double kCollisionTol = 1e-4;

void check_distinct(const std::vector<Vec2>& points,
                    const std::vector<std::pair<Vec2, double>>& fixed) {
    for (size_t i = 0; i < points.size(); ++i) {
        for (size_t j = i + 1; j < points.size(); ++j)
            if (theta_dist({points[i][0] - points[j][0], points[i][1] - points[j][1]}) <
                kCollisionTol)
                throw std::runtime_error("point collision");
        for (const auto& [q, a] : fixed) {
            (void)a;
            if (theta_dist({points[i][0] - q[0], points[i][1] - q[1]}) < kCollisionTol)
                throw std::runtime_error("point collision");
        }
    }
}

void check_rho2_gate(const ShadowProblem& prob) {
    double full = 0.0;
    for (const auto& [q, a] : prob.fixed_singular) {
        (void)q;
        full += 4.0 * (1.0 + a);
    }
    double r = prob.rho2 / M_PI;
    for (int N = 0; 4.0 * N + full <= r + 1.0; ++N) {
        double v = 4.0 * N + full;
        if (v > 0.0 && std::abs(r - v) <= 1e-9)
            throw std::runtime_error("critical parameter");
    }
}

// H = weight * e^w and its integral
struct Nonlinearity {
    TorusField H;
    double I;
};

Nonlinearity assemble_H(const ShadowProblem& prob, const std::vector<Vec2>& points,
                        const TorusField& w) {
    TorusField H = shadow_weight(prob, points);
    auto& v = H.mutable_values();
    for (size_t k = 0; k < v.size(); ++k) v[k] *= std::exp(w.values()[k]);
    double I = integrate(H);
    if (!(I > 0.0) || !std::isfinite(I))
        throw std::runtime_error("degenerate weight: normalization integral vanishes");
    return {std::move(H), I};
}

// log h1 - w/2 evaluated off-grid through the trigonometric interpolant
double smooth_part(const ShadowProblem& prob, const TorusField& w, const Vec2& x) {
    return std::log(prob.h1.eval(x)) - 0.5 * w.eval(x);
}

}  // namespace

TorusField shadow_weight(const ShadowProblem& prob, const std::vector<Vec2>& points) {
    TorusField weight = prob.h2;
    auto mul = [&](const TorusField& f) {
        auto& v = weight.mutable_values();
        for (size_t k = 0; k < v.size(); ++k) v[k] *= f.values()[k];
    };
    for (const auto& p : points) mul(singular_weight(p, 4.0 * M_PI, weight.grid()));
    for (const auto& [q, a] : prob.fixed_singular)
        mul(singular_weight(q, 4.0 * M_PI * (1.0 + a), weight.grid()));
    return weight;
}

double f_Q_value(const std::vector<Vec2>& points, const ShadowProblem& prob,
                 const TorusField& w) {
    check_distinct(points, prob.fixed_singular);
    double f = 0.0;
    const double R0 = green_regular_constant();
    for (const auto& x : points) f += smooth_part(prob, w, x) + 4.0 * M_PI * R0;
    for (size_t i = 0; i < points.size(); ++i)
        for (size_t j = 0; j < points.size(); ++j)
            if (i != j) f += 4.0 * M_PI * green_eval(points[j], points[i]);
    for (const auto& [q, a] : prob.fixed_singular)
        for (const auto& x : points) f += 8.0 * M_PI * (1.0 + a) * green_eval(q, x);
    return f;
}

Vec2 f_Q_grad(const ShadowState& state, const ShadowProblem& prob, int i) {
    check_distinct(state.points, prob.fixed_singular);
    const Vec2& x = state.points[i];
    Vec2 gh = prob.h1.grad(x);
    double h = prob.h1.eval(x);
    Vec2 gw = state.w.grad(x);
    Vec2 g{gh[0] / h - 0.5 * gw[0], gh[1] / h - 0.5 * gw[1]};
    for (size_t j = 0; j < state.points.size(); ++j) {
        if (int(j) == i) continue;
        Vec2 gg = green_grad(state.points[j], x);
        g[0] += 8.0 * M_PI * gg[0];
        g[1] += 8.0 * M_PI * gg[1];
    }
    for (const auto& [q, a] : prob.fixed_singular) {
        Vec2 gg = green_grad(q, x);
        g[0] += 8.0 * M_PI * (1.0 + a) * gg[0];
        g[1] += 8.0 * M_PI * (1.0 + a) * gg[1];
    }
    return g;
}

std::array<double, 4> f_Q_hess(const ShadowState& state, const ShadowProblem& prob, int i) {
    const Vec2& x = state.points[i];
    // exact second derivatives of the interpolants: differentiate the
    // spectral gradient fields, then assemble Hess(log h1) - Hess(w)/2
    auto [h1x, h1y] = gradient(prob.h1);
    auto [wx, wy] = gradient(state.w);
    double h = prob.h1.eval(x);
    Vec2 gh{h1x.eval(x), h1y.eval(x)};
    Vec2 r1 = h1x.grad(x), r2 = h1y.grad(x);
    Vec2 s1 = wx.grad(x), s2 = wy.grad(x);
    std::array<double, 4> H;
    H[0] = r1[0] / h - gh[0] * gh[0] / (h * h) - 0.5 * s1[0];
    H[1] = r1[1] / h - gh[0] * gh[1] / (h * h) - 0.5 * s1[1];
    H[2] = r2[0] / h - gh[1] * gh[0] / (h * h) - 0.5 * s2[0];
    H[3] = r2[1] / h - gh[1] * gh[1] / (h * h) - 0.5 * s2[1];
    for (size_t j = 0; j < state.points.size(); ++j) {
        if (int(j) == i) continue;
        auto hg = green_hess(state.points[j], x);
        for (int k = 0; k < 4; ++k) H[k] += 8.0 * M_PI * hg[k];
    }
    for (const auto& [q, a] : prob.fixed_singular) {
        auto hg = green_hess(q, x);
        for (int k = 0; k < 4; ++k) H[k] += 8.0 * M_PI * (1.0 + a) * hg[k];
    }
    return H;
}

ShadowDirection shadow_residual(const std::vector<Vec2>& points, const TorusField& w,
                                const ShadowProblem& prob) {
    auto [H, I] = assemble_H(prob, points, w);
    TorusField r = apply_laplacian(w);
    auto& rv = r.mutable_values();
    for (size_t k = 0; k < rv.size(); ++k)
        rv[k] += 2.0 * prob.rho2 * (H.values()[k] / I - 1.0);
    ShadowState tmp(points, w);
    std::vector<Vec2> g(points.size());
    for (size_t i = 0; i < points.size(); ++i) g[i] = f_Q_grad(tmp, prob, int(i));
    return {std::move(r), std::move(g)};
}

ShadowState newton_shadow(const ShadowProblem& prob, const ShadowState& init, double tol) {
    check_rho2_gate(prob);
    check_distinct(init.points, prob.fixed_singular);
    const double clamp = 2.0 * init.w.grid().spacing();

    ShadowState state = init;
    for (int outer = 0; outer < 60; ++outer) {
        // inner solve for w at frozen points
        MeanFieldProblem mf(2.0 * prob.rho2, shadow_weight(prob, state.points));
        auto [w, rep] = newton_mf(state.w, mf, tol);
        state.w = std::move(w);
        state.residual_field_sup = rep.final_residual_sup;

        state.grad_fQ_norms.clear();
        double gmax = 0.0;
        std::vector<Vec2> grads(state.points.size());
        for (size_t i = 0; i < state.points.size(); ++i) {
            grads[i] = f_Q_grad(state, prob, int(i));
            double n = std::hypot(grads[i][0], grads[i][1]);
            state.grad_fQ_norms.push_back(n);
            gmax = std::max(gmax, n);
        }
        if (gmax <= tol && state.residual_field_sup <= tol) {
            state.converged = true;
            return state;
        }

        // clamped quasi-Newton update of the points
        for (size_t i = 0; i < state.points.size(); ++i) {
            auto h = f_Q_hess(state, prob, int(i));
            double det = h[0] * h[3] - h[1] * h[2];
            Vec2 step;
            if (std::abs(det) > 1e-8) {
                step = {-(h[3] * grads[i][0] - h[1] * grads[i][1]) / det,
                        -(-h[2] * grads[i][0] + h[0] * grads[i][1]) / det};
            } else {
                double sc = 0.1 / std::max(1.0, std::hypot(grads[i][0], grads[i][1]));
                step = {-sc * grads[i][0], -sc * grads[i][1]};
            }
            double len = std::hypot(step[0], step[1]);
            if (len > clamp) {
                step[0] *= clamp / len;
                step[1] *= clamp / len;
            }
            state.points[i][0] += step[0];
            state.points[i][1] += step[1];
        }
        check_distinct(state.points, prob.fixed_singular);
    }
    throw std::runtime_error("shadow iteration failed to converge");
}

ShadowDirection linearized_apply(const ShadowState& state, const ShadowProblem& prob,
                                 const ShadowDirection& dir) {
    if (!state.converged) throw std::runtime_error("state not converged");
    const TorusGrid grid = state.w.grid();
    auto [H, I] = assemble_H(prob, state.points, state.w);

    bool have_nu = false;
    for (const auto& nu : dir.nu)
        if (nu[0] != 0.0 || nu[1] != 0.0) have_nu = true;

    // dH = H * (phi + 4 pi sum_j grad_x G(x,p_j).nu_j); the pole movement
    // enters through the vanishing factor of the weight
    TorusField dH = H;
    {
        auto& v = dH.mutable_values();
        const int n = grid.n;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                size_t k = size_t(i) * n + j;
                if (v[k] == 0.0) continue;
                double s = dir.phi.values()[k];
                if (have_nu) {
                    Vec2 x{i * grid.spacing(), j * grid.spacing()};
                    for (size_t q = 0; q < state.points.size(); ++q) {
                        const Vec2& nu = dir.nu[q];
                        if (nu[0] == 0.0 && nu[1] == 0.0) continue;
                        Vec2 gg = green_grad(state.points[q], x);
                        s += 4.0 * M_PI * (gg[0] * nu[0] + gg[1] * nu[1]);
                    }
                }
                v[k] *= s;
            }
    }
    double dI = integrate(dH);

    TorusField out = apply_laplacian(dir.phi);
    {
        auto& v = out.mutable_values();
        for (size_t k = 0; k < v.size(); ++k)
            v[k] += 2.0 * prob.rho2 *
                    (dH.values()[k] / I - H.values()[k] * dI / (I * I));
    }

    std::vector<Vec2> pts(state.points.size(), Vec2{0.0, 0.0});
    for (size_t i = 0; i < state.points.size(); ++i) {
        auto h = f_Q_hess(state, prob, int(i));
        const Vec2& ni = dir.nu[i];
        pts[i] = {h[0] * ni[0] + h[1] * ni[1], h[2] * ni[0] + h[3] * ni[1]};
        for (size_t j = 0; j < state.points.size(); ++j) {
            if (i == j) continue;
            auto hg = green_hess(state.points[j], state.points[i]);
            const Vec2& nj = dir.nu[j];
            pts[i][0] -= 8.0 * M_PI * (hg[0] * nj[0] + hg[1] * nj[1]);
            pts[i][1] -= 8.0 * M_PI * (hg[2] * nj[0] + hg[3] * nj[1]);
        }
        Vec2 gp = dir.phi.grad(state.points[i]);
        pts[i][0] -= 0.5 * gp[0];
        pts[i][1] -= 0.5 * gp[1];
    }
    return {std::move(out), std::move(pts)};
}

MorseReport morse_index(ShadowState& state, const ShadowProblem& prob, int n_eigs,
                        int kmax) {
    if (!state.converged) throw std::runtime_error("state not converged");
    const TorusGrid grid = state.w.grid();
    const int n = grid.n;
    const int m = int(state.points.size());

    // real orthonormal mode list: sqrt(2) cos / sin over half the lattice
    struct Mode {
        int k1, k2;
        bool sin;
    };
    std::vector<Mode> modes;
    for (int k1 = -kmax; k1 <= kmax; ++k1)
        for (int k2 = -kmax; k2 <= kmax; ++k2) {
            if (k1 < 0 || (k1 == 0 && k2 <= 0)) continue;
            modes.push_back({k1, k2, false});
            modes.push_back({k1, k2, true});
        }
    const int nm = int(modes.size());
    const int N = nm + 2 * m;

    auto sample_mode = [&](const Mode& md) {
        return sample(grid, [&](double x1, double x2) {
            double ph = 2.0 * M_PI * (md.k1 * x1 + md.k2 * x2);
            return std::sqrt(2.0) * (md.sin ? std::sin(ph) : std::cos(ph));
        });
    };

    // project a field onto the mode basis through one transform
    auto project = [&](const TorusField& f, Eigen::VectorXd& col) {
        const auto& hat = f.spectral();
        for (int b = 0; b < nm; ++b) {
            const Mode& md = modes[b];
            int i = (md.k1 + n) % n, j = (md.k2 + n) % n;
            std::complex<double> c = hat[size_t(i) * n + j];
            col[b] = std::sqrt(2.0) * (md.sin ? -c.imag() : c.real());
        }
    };

    Eigen::MatrixXd M(N, N);
    ShadowDirection dir{TorusField(grid), std::vector<Vec2>(m, Vec2{0.0, 0.0})};
    Eigen::VectorXd col(N);
    for (int b = 0; b < N; ++b) {
        if (b < nm) {
            dir.phi = sample_mode(modes[b]);
            for (auto& nu : dir.nu) nu = {0.0, 0.0};
        } else {
            dir.phi = TorusField(grid);
            for (auto& nu : dir.nu) nu = {0.0, 0.0};
            dir.nu[(b - nm) / 2][(b - nm) % 2] = 1.0;
        }
        ShadowDirection r = linearized_apply(state, prob, dir);
        project(r.phi, col);
        for (int i = 0; i < m; ++i) {
            col[nm + 2 * i] = r.nu[i][0];
            col[nm + 2 * i + 1] = r.nu[i][1];
        }
        M.col(b) = col;
    }

    Eigen::BDCSVD<Eigen::MatrixXd> svd(M);
    MorseReport rep;
    rep.operator_norm = svd.singularValues()(0);
    rep.min_singular_value = svd.singularValues()(N - 1);
    state.min_singular_value = rep.min_singular_value;
    if (rep.min_singular_value < 1e-6 * rep.operator_norm)
        throw std::runtime_error("degenerate state");

    Eigen::EigenSolver<Eigen::MatrixXd> es(M);
    // the eigenproblem pairs the operator with +mu, so mu = -lambda
    std::vector<std::pair<double, double>> mu;  // (|mu|, Re mu)
    int unstable = 0;
    for (int i = 0; i < N; ++i) {
        std::complex<double> lam = es.eigenvalues()(i);
        std::complex<double> m_ = -lam;
        mu.push_back({std::abs(m_), m_.real()});
        if (m_.real() < 0.0) ++unstable;
    }
    std::sort(mu.begin(), mu.end());
    int count = 0;
    for (int i = 0; i < std::min<int>(n_eigs, N); ++i) {
        rep.eigenvalues.push_back(mu[i].second);
        if (mu[i].second < 0.0) ++count;
    }
    rep.index = count;
    // every unstable direction must be inside the reported window
    if (count != unstable)
        throw std::runtime_error("eigenvalue window too small for the index");
    state.morse_index = rep.index;
    return rep;
}

std::pair<int, int> degree_signs(const ShadowState& state, const ShadowProblem& prob,
                                 double l_Q) {
    if (!state.morse_index.has_value()) throw std::runtime_error("morse index unavailable");
    if (l_Q == 0.0) throw std::runtime_error("vanishing gate coefficient");
    int dS = (state.morse_index.value() % 2 == 0) ? 1 : -1;
    int q = int(state.points.size() + prob.fixed_singular.size());
    int dT = (q % 2 == 0) ? dS : -dS;
    return {dS, dT};
}

}  // namespace mft

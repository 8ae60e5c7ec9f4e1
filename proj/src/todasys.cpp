#include "mft/todasys.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace mft {

namespace {

double reduce(double t) { return t - std::round(t); }

double torus_dist(const Vec2& a, const Vec2& b) {
    return std::hypot(reduce(a[0] - b[0]), reduce(a[1] - b[1]));
}

// weighted exponential density and its normalization integral
double weighted_exp(const TorusField& h, const TorusField& e, TorusField& out) {
    for (size_t k = 0; k < out.mutable_values().size(); ++k)
        out.mutable_values()[k] = h.values()[k] * std::exp(e.values()[k]);
    double I = integrate(out);
    if (!(I > 0.0) || !std::isfinite(I))
        throw std::runtime_error("degenerate weight: normalization integral vanishes");
    return I;
}

TodaState to_v(const TodaState& s) {
    if (s.form == TodaForm::V) return s;
    TodaState out(TodaForm::V, s.f1, s.f2, s.rho1, s.rho2);
    auto &v1 = out.f1.mutable_values(), &v2 = out.f2.mutable_values();
    for (size_t k = 0; k < v1.size(); ++k) {
        double u1 = s.f1.values()[k], u2 = s.f2.values()[k];
        v1[k] = (2.0 * u1 + u2) / 3.0;
        v2[k] = (u1 + 2.0 * u2) / 3.0;
    }
    return out;
}

TodaState to_u(const TodaState& s) {
    if (s.form == TodaForm::U) return s;
    TodaState out(TodaForm::U, s.f1, s.f2, s.rho1, s.rho2);
    auto &u1 = out.f1.mutable_values(), &u2 = out.f2.mutable_values();
    for (size_t k = 0; k < u1.size(); ++k) {
        double v1 = s.f1.values()[k], v2 = s.f2.values()[k];
        u1[k] = 2.0 * v1 - v2;
        u2[k] = 2.0 * v2 - v1;
    }
    return out;
}

void gate_parameters(double rho1, double rho2) {
    if (!(rho1 > 0.0) || rho1 >= 8.0 * M_PI ||
        std::abs(rho1 - 4.0 * M_PI) <= 1e-9 * M_PI)
        throw std::runtime_error("first parameter outside the solvability windows");
    double q = rho2 / (4.0 * M_PI);
    if (q >= 0.5 && std::abs(q - std::round(q)) <= 1e-9)
        throw std::runtime_error("second parameter on the critical lattice");
}

// full width, in grid cells, of the sharpest peak of the first field: twice
// the shortest axis-aligned walk from the maximum down to (max - 4)
double core_width_cells(const TodaState& vstate) {
    const TorusField& v1 = vstate.f1;
    const int n = v1.n();
    int pi = 0, pj = 0;
    double vmax = v1(0, 0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (v1(i, j) > vmax) { vmax = v1(i, j); pi = i; pj = j; }
    int best = n / 2;
    const int di[4] = {1, -1, 0, 0}, dj[4] = {0, 0, 1, -1};
    for (int d = 0; d < 4; ++d) {
        int steps = n / 2;
        for (int s = 1; s <= n / 2; ++s)
            if (v1(pi + s * di[d], pj + s * dj[d]) < vmax - 4.0) { steps = s; break; }
        best = std::min(best, steps);
    }
    return 2.0 * best;
}

}  // namespace

std::pair<TorusField, TorusField> residual_toda(const TodaState& state,
                                                const TodaProblem& prob) {
    const TorusGrid grid = state.f1.grid();
    if (!(prob.h1.grid() == grid) || !(prob.h2.grid() == grid))
        throw std::invalid_argument("weights must live on the state grid");

    TorusField e1(grid), e2(grid);
    if (state.form == TodaForm::V) {
        for (size_t k = 0; k < e1.mutable_values().size(); ++k) {
            double v1 = state.f1.values()[k], v2 = state.f2.values()[k];
            e1.mutable_values()[k] = 2.0 * v1 - v2;
            e2.mutable_values()[k] = 2.0 * v2 - v1;
        }
    } else {
        e1 = state.f1;
        e2 = state.f2;
    }
    TorusField g1(grid), g2(grid);
    double I1 = weighted_exp(prob.h1, e1, g1), I2 = weighted_exp(prob.h2, e2, g2);

    TorusField r1 = apply_laplacian(state.f1), r2 = apply_laplacian(state.f2);
    auto &r1v = r1.mutable_values(), &r2v = r2.mutable_values();
    for (size_t k = 0; k < r1v.size(); ++k) {
        double d1 = g1.values()[k] / I1 - 1.0, d2 = g2.values()[k] / I2 - 1.0;
        if (state.form == TodaForm::V) {
            r1v[k] += state.rho1 * d1;
            r2v[k] += state.rho2 * d2;
        } else {
            r1v[k] += 2.0 * state.rho1 * d1 - state.rho2 * d2;
            r2v[k] += 2.0 * state.rho2 * d2 - state.rho1 * d1;
        }
    }
    return {std::move(r1), std::move(r2)};
}

TodaState transform_uv(const TodaState& state) {
    return state.form == TodaForm::U ? to_v(state) : to_u(state);
}

std::pair<TorusField, TorusField> jacobian_apply_toda(const TodaState& state,
                                                      const TodaProblem& prob,
                                                      const TorusField& phi1,
                                                      const TorusField& phi2) {
    if (state.form != TodaForm::V)
        throw std::invalid_argument("jacobian is formulated in the v-representation");
    const TorusGrid grid = state.f1.grid();
    TorusField e1(grid), e2(grid);
    for (size_t k = 0; k < e1.mutable_values().size(); ++k) {
        double v1 = state.f1.values()[k], v2 = state.f2.values()[k];
        e1.mutable_values()[k] = 2.0 * v1 - v2;
        e2.mutable_values()[k] = 2.0 * v2 - v1;
    }
    TorusField g1(grid), g2(grid);
    double I1 = weighted_exp(prob.h1, e1, g1), I2 = weighted_exp(prob.h2, e2, g2);

    // derivative of g/I against the exponent direction psi:
    // (g/I) (psi - int (g/I) psi)
    TorusField r1 = apply_laplacian(phi1), r2 = apply_laplacian(phi2);
    TorusField gp1(grid), gp2(grid);
    for (size_t k = 0; k < gp1.mutable_values().size(); ++k) {
        gp1.mutable_values()[k] = g1.values()[k] / I1 *
                                  (2.0 * phi1.values()[k] - phi2.values()[k]);
        gp2.mutable_values()[k] = g2.values()[k] / I2 *
                                  (2.0 * phi2.values()[k] - phi1.values()[k]);
    }
    double m1 = integrate(gp1), m2 = integrate(gp2);
    auto &r1v = r1.mutable_values(), &r2v = r2.mutable_values();
    for (size_t k = 0; k < r1v.size(); ++k) {
        r1v[k] += state.rho1 * (gp1.values()[k] - g1.values()[k] / I1 * m1);
        r2v[k] += state.rho2 * (gp2.values()[k] - g2.values()[k] / I2 * m2);
    }
    return {std::move(r1), std::move(r2)};
}

std::pair<TodaState, NewtonReport> newton_toda(const TodaState& state0,
                                               const TodaProblem& prob,
                                               std::pair<double, double> rho,
                                               double tol) {
    gate_parameters(rho.first, rho.second);
    const TorusGrid grid = state0.f1.grid();
    const size_t N = size_t(grid.n) * grid.n;

    TodaState v = to_v(state0);
    v.rho1 = rho.first;
    v.rho2 = rho.second;
    v.f1.shift_mean_to_zero();
    v.f2.shift_mean_to_zero();
    NewtonReport rep;

    auto sup_pair = [](const std::pair<TorusField, TorusField>& r) {
        return std::max(r.first.sup_norm(), r.second.sup_norm());
    };

    // preconditioned system (I + inv(Delta) K) delta = -inv(Delta) F,
    // blockwise on the stacked mean-zero pair
    auto precond = [&](TorusField f) {
        f.shift_mean_to_zero();
        return solve_poisson(f);
    };
    // the line search monitors the preconditioned l2 norm -- the quantity
    // the Krylov direction actually decreases; the sup norm, concentrated in
    // a handful of core cells, only gates the final convergence test
    auto l2_pair = [&](const std::pair<TorusField, TorusField>& r) {
        TorusField a = precond(r.first), b = precond(r.second);
        double s = 0.0;
        for (size_t k = 0; k < a.values().size(); ++k)
            s += a.values()[k] * a.values()[k] + b.values()[k] * b.values()[k];
        return std::sqrt(s * v.f1.grid().cell_area());
    };

    std::pair<TorusField, TorusField> F = residual_toda(v, prob);
    double res = sup_pair(F);
    double res_l2 = l2_pair(F);
    const int max_newton = 60;
    while (res > tol && rep.iterations < max_newton) {
        TorusField b1 = F.first, b2 = F.second;
        b1 *= -1.0;
        b2 *= -1.0;
        b1 = precond(std::move(b1));
        b2 = precond(std::move(b2));
        std::vector<double> rhs(2 * N);
        std::copy(b1.values().begin(), b1.values().end(), rhs.begin());
        std::copy(b2.values().begin(), b2.values().end(), rhs.begin() + N);

        auto apply = [&](const std::vector<double>& xv) {
            TorusField p1(grid), p2(grid);
            std::copy(xv.begin(), xv.begin() + N, p1.mutable_values().begin());
            std::copy(xv.begin() + N, xv.end(), p2.mutable_values().begin());
            auto J = jacobian_apply_toda(v, prob, p1, p2);
            TorusField q1 = precond(std::move(J.first));
            TorusField q2 = precond(std::move(J.second));
            std::vector<double> out(2 * N);
            std::copy(q1.values().begin(), q1.values().end(), out.begin());
            std::copy(q2.values().begin(), q2.values().end(), out.begin() + N);
            return out;
        };
        std::vector<double> dv = gmres_solve(apply, rhs, 1e-4, 160);
        TorusField d1(grid), d2(grid);
        std::copy(dv.begin(), dv.begin() + N, d1.mutable_values().begin());
        std::copy(dv.begin() + N, dv.end(), d2.mutable_values().begin());
        d1.shift_mean_to_zero();
        d2.shift_mean_to_zero();

        double t = 1.0;
        bool accepted = false;
        for (int halve = 0; halve <= 20; ++halve) {
            TodaState trial = v;
            TorusField s1 = d1, s2 = d2;
            s1 *= t;
            s2 *= t;
            trial.f1 += s1;
            trial.f2 += s2;
            trial.f1.shift_mean_to_zero();
            trial.f2.shift_mean_to_zero();
            // an overshooting trial can overflow the exponentials; treat it
            // like any other rejected step
            std::pair<TorusField, TorusField> Ft{TorusField(grid), TorusField(grid)};
            double rt_l2;
            try {
                Ft = residual_toda(trial, prob);
                rt_l2 = l2_pair(Ft);
            } catch (const std::runtime_error&) {
                rt_l2 = std::numeric_limits<double>::infinity();
            }
            if (rt_l2 < res_l2) {
                v = std::move(trial);
                res = sup_pair(Ft);
                F = std::move(Ft);
                res_l2 = rt_l2;
                rep.damping_history.push_back(t);
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        ++rep.iterations;
        if (!accepted) break;
    }
    rep.final_residual_sup = res;
    rep.converged = res <= tol;
    if (!rep.converged) throw NewtonDivergence(rep);
    if (state0.form == TodaForm::U) return {to_u(v), rep};
    return {v, rep};
}

std::pair<TodaState, NewtonReport> newton_toda_anchored(const TodaState& state0,
                                                        const TodaProblem& prob,
                                                        const Vec2& anchor,
                                                        double height, double tol) {
    const TorusGrid grid = state0.f1.grid();
    const int n = grid.n;
    const size_t N = size_t(n) * n;
    const int ai = int(std::lround(reduce(anchor[0]) * n)) % n;
    const int aj = int(std::lround(reduce(anchor[1]) * n)) % n;
    const size_t anode = size_t((ai + n) % n) * n + (aj + n) % n;

    TodaState v = to_v(state0);
    v.f1.shift_mean_to_zero();
    v.f2.shift_mean_to_zero();
    NewtonReport rep;

    auto precond = [&](TorusField f) {
        f.shift_mean_to_zero();
        return solve_poisson(f);
    };
    auto sup_pair = [](const std::pair<TorusField, TorusField>& r) {
        return std::max(r.first.sup_norm(), r.second.sup_norm());
    };
    // merit of the bordered system: preconditioned l2 norm of the field
    // residual plus the anchor gap
    auto merit = [&](const std::pair<TorusField, TorusField>& r, double gap) {
        TorusField a = precond(r.first), b = precond(r.second);
        double s = 0.0;
        for (size_t k = 0; k < a.values().size(); ++k)
            s += a.values()[k] * a.values()[k] + b.values()[k] * b.values()[k];
        return std::sqrt(s * grid.cell_area() + gap * gap);
    };

    std::pair<TorusField, TorusField> F = residual_toda(v, prob);
    double gap = height - v.f1.values()[anode];
    double res = std::max(sup_pair(F), std::abs(gap));
    double mer = merit(F, gap);
    const int max_newton = 60;
    while (res > tol && rep.iterations < max_newton) {
        // density derivative of the first equation against rho1
        TorusField e1(grid);
        for (size_t k = 0; k < N; ++k)
            e1.mutable_values()[k] = 2.0 * v.f1.values()[k] - v.f2.values()[k];
        TorusField g1(grid);
        double I1 = weighted_exp(prob.h1, e1, g1);
        TorusField drho(grid);
        for (size_t k = 0; k < N; ++k)
            drho.mutable_values()[k] = g1.values()[k] / I1 - 1.0;
        TorusField drho_p = precond(drho);

        TorusField b1 = F.first, b2 = F.second;
        b1 *= -1.0;
        b2 *= -1.0;
        b1 = precond(std::move(b1));
        b2 = precond(std::move(b2));
        std::vector<double> rhs(2 * N + 1);
        std::copy(b1.values().begin(), b1.values().end(), rhs.begin());
        std::copy(b2.values().begin(), b2.values().end(), rhs.begin() + N);
        rhs[2 * N] = gap;

        auto apply = [&](const std::vector<double>& xv) {
            TorusField p1(grid), p2(grid);
            std::copy(xv.begin(), xv.begin() + N, p1.mutable_values().begin());
            std::copy(xv.begin() + N, xv.begin() + 2 * N, p2.mutable_values().begin());
            auto J = jacobian_apply_toda(v, prob, p1, p2);
            TorusField q1 = precond(std::move(J.first));
            TorusField q2 = precond(std::move(J.second));
            std::vector<double> out(2 * N + 1);
            for (size_t k = 0; k < N; ++k)
                out[k] = q1.values()[k] + xv[2 * N] * drho_p.values()[k];
            std::copy(q2.values().begin(), q2.values().end(), out.begin() + N);
            out[2 * N] = p1.values()[anode];
            return out;
        };
        std::vector<double> dv = gmres_solve(apply, rhs, 1e-6, 300);
        TorusField d1(grid), d2(grid);
        std::copy(dv.begin(), dv.begin() + N, d1.mutable_values().begin());
        std::copy(dv.begin() + N, dv.begin() + 2 * N, d2.mutable_values().begin());
        double drho1 = dv[2 * N];

        double t = 1.0;
        bool accepted = false;
        for (int halve = 0; halve <= 20; ++halve) {
            TodaState trial = v;
            TorusField s1 = d1, s2 = d2;
            s1 *= t;
            s2 *= t;
            trial.f1 += s1;
            trial.f2 += s2;
            trial.rho1 = v.rho1 + t * drho1;
            double shift1 = trial.f1.mean();
            trial.f1.shift_mean_to_zero();
            trial.f2.shift_mean_to_zero();
            double trial_gap = height - (v.f1.values()[anode] + t * d1.values()[anode] - shift1);
            std::pair<TorusField, TorusField> Ft{TorusField(grid), TorusField(grid)};
            double mt;
            try {
                Ft = residual_toda(trial, prob);
                mt = merit(Ft, trial_gap);
            } catch (const std::runtime_error&) {
                mt = std::numeric_limits<double>::infinity();
            }
            if (mt < mer) {
                v = std::move(trial);
                F = std::move(Ft);
                gap = trial_gap;
                mer = mt;
                res = std::max(sup_pair(F), std::abs(gap));
                rep.damping_history.push_back(t);
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        ++rep.iterations;
        if (!accepted) break;
    }
    rep.final_residual_sup = res;
    rep.converged = res <= tol;
    if (!rep.converged) throw NewtonDivergence(rep);
    gate_parameters(v.rho1, v.rho2);
    if (state0.form == TodaForm::U) return {to_u(v), rep};
    return {v, rep};
}

ContinuationRun continue_branch(const TodaState& start, const TodaProblem& prob,
                                const std::vector<std::pair<double, double>>& path,
                                const ContinuationController& ctrl) {
    ContinuationRun run;

    // arc coordinate along the piecewise linear parameter path, the start
    // parameters prepended
    std::vector<std::pair<double, double>> nodes{{start.rho1, start.rho2}};
    nodes.insert(nodes.end(), path.begin(), path.end());
    std::vector<double> arc{0.0};
    for (size_t i = 1; i < nodes.size(); ++i)
        arc.push_back(arc[i - 1] + std::hypot(nodes[i].first - nodes[i - 1].first,
                                              nodes[i].second - nodes[i - 1].second));
    const double S = arc.back();
    auto rho_at = [&](double s) -> std::pair<double, double> {
        for (size_t i = 1; i < nodes.size(); ++i)
            if (s <= arc[i] || i + 1 == nodes.size()) {
                double den = arc[i] - arc[i - 1];
                double t = den > 0.0 ? (s - arc[i - 1]) / den : 1.0;
                t = std::clamp(t, 0.0, 1.0);
                return {nodes[i - 1].first + t * (nodes[i].first - nodes[i - 1].first),
                        nodes[i - 1].second + t * (nodes[i].second - nodes[i - 1].second)};
            }
        return nodes.back();
    };

    // certify the start; a converged start returns in one residual check.
    // the branch is recorded uniformly in the v-representation
    auto [s0, rep0] = newton_toda(to_v(start), prob, {start.rho1, start.rho2}, ctrl.tol);
    run.branch.push_back(std::move(s0));
    run.reports.push_back(std::move(rep0));

    auto triggered = [&](const TodaState& st) {
        TodaState v = to_v(st);
        if (std::max(v.f1.sup_norm(), v.f2.sup_norm()) > ctrl.blowup_max) return true;
        return core_width_cells(v) < ctrl.core_cells;
    };
    if (triggered(run.branch.back())) {
        run.termination = "blow-up";
        return run;
    }

    double s = 0.0, s_prev = 0.0, step = ctrl.step;
    int successes = 0;
    while (true) {
        if (s >= S - 1e-14 * (1.0 + S)) {
            run.termination = "path end";
            return run;
        }
        if (int(run.branch.size()) >= ctrl.max_states) {
            run.termination = "state budget exhausted";
            return run;
        }
        double s_next = std::min(s + step, S);
        // secant predictor in the arc coordinate
        TodaState pred = run.branch.back();
        if (run.branch.size() >= 2 && s > s_prev) {
            const TodaState& prev = run.branch[run.branch.size() - 2];
            double fac = (s_next - s) / (s - s_prev);
            TodaState pv = to_v(pred), qv = to_v(prev);
            for (size_t k = 0; k < pv.f1.mutable_values().size(); ++k) {
                pv.f1.mutable_values()[k] +=
                    fac * (pv.f1.values()[k] - qv.f1.values()[k]);
                pv.f2.mutable_values()[k] +=
                    fac * (pv.f2.values()[k] - qv.f2.values()[k]);
            }
            pred = std::move(pv);
        }
        try {
            auto [st, rep] = newton_toda(pred, prob, rho_at(s_next), ctrl.tol);
            run.branch.push_back(std::move(st));
            run.reports.push_back(std::move(rep));
            s_prev = s;
            s = s_next;
            if (++successes >= ctrl.grow_after) {
                step = std::min(step * ctrl.grow, ctrl.step_max);
                successes = 0;
            }
            if (triggered(run.branch.back())) {
                run.termination = "blow-up";
                return run;
            }
        } catch (const NewtonDivergence&) {
            step *= 0.5;
            successes = 0;
            if (step < ctrl.step_min) {
                run.termination = "step underflow";
                return run;
            }
        }
    }
}

BlowupDiagnostics blowup_diagnostics(const TodaState& state, const TodaProblem& prob,
                                     const ShadowState* shadow_ref) {
    BlowupDiagnostics diag;
    const TorusGrid grid = state.f1.grid();
    const int n = grid.n;
    TodaState v = to_v(state), u = to_u(state);

    // normalized exponents: subtracting the log of the normalization
    // integral turns each weighted exponential into a probability density
    TorusField d1(grid), d2(grid);
    double I1 = weighted_exp(prob.h1, u.f1, d1), I2 = weighted_exp(prob.h2, u.f2, d2);
    TorusField ut1 = u.f1, ut2 = u.f2;
    for (size_t k = 0; k < ut1.mutable_values().size(); ++k) {
        ut1.mutable_values()[k] -= std::log(I1);
        ut2.mutable_values()[k] -= std::log(I2);
        d1.mutable_values()[k] /= I1;
        d2.mutable_values()[k] /= I2;
    }

    // peaks: strict local maxima of either normalized exponent above its
    // mean plus the detection threshold, merged within radius 0.05
    struct Peak {
        Vec2 x;
        double height;
    };
    std::vector<Peak> peaks;
    for (const TorusField* f : {&ut1, &ut2}) {
        double thresh = f->mean() + 5.0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                double c = (*f)(i, j);
                if (c <= thresh) continue;
                bool is_max = true;
                for (int a = -1; a <= 1 && is_max; ++a)
                    for (int b = -1; b <= 1; ++b)
                        if ((a || b) && (*f)(i + a, j + b) >= c) {
                            is_max = false;
                            break;
                        }
                if (is_max) peaks.push_back({{double(i) / n, double(j) / n}, c});
            }
    }
    std::sort(peaks.begin(), peaks.end(),
              [](const Peak& a, const Peak& b) { return a.height > b.height; });
    std::vector<Peak> kept;
    for (const Peak& p : peaks) {
        bool merged = false;
        for (const Peak& q : kept)
            if (torus_dist(p.x, q.x) < 0.05) {
                merged = true;
                break;
            }
        if (!merged) kept.push_back(p);
    }
    if (kept.empty()) return diag;

    const double deltas[3] = {0.05, 0.1, 0.2};
    for (const Peak& p : kept) {
        diag.points.push_back(p.x);
        std::array<double, 3> s1{}, s2{};
        double conc = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                double dist = torus_dist({double(i) / n, double(j) / n}, p.x);
                for (int k = 0; k < 3; ++k)
                    if (dist <= deltas[k]) {
                        s1[k] += d1(i, j);
                        s2[k] += d2(i, j);
                    }
                if (dist <= 0.1) conc += d1(i, j);
            }
        double ca = grid.cell_area();
        for (int k = 0; k < 3; ++k) {
            s1[k] *= state.rho1 * ca / (2.0 * M_PI);
            s2[k] *= state.rho2 * ca / (2.0 * M_PI);
        }
        diag.sigma1.push_back(s1);
        diag.sigma2.push_back(s2);
        diag.concentration.push_back(conc * ca);
        // nearest of the admissible local-mass pairs at the tightest radius
        const std::array<std::pair<double, double>, 3> table{
            {{2.0, 4.0}, {4.0, 2.0}, {4.0, 4.0}}};
        const char* names[3] = {"(2,4)", "(4,2)", "(4,4)"};
        int best = 0;
        double bd = 1e300;
        for (int k = 0; k < 3; ++k) {
            double dd = std::hypot(s1[0] - table[k].first, s2[0] - table[k].second);
            if (dd < bd) {
                bd = dd;
                best = k;
            }
        }
        diag.labels.push_back(names[best]);
    }
    diag.core_width_cells = core_width_cells(v);

    if (shadow_ref) {
        TorusField diff = v.f2;
        TorusField hw = shadow_ref->w;
        hw *= 0.5;
        diff -= hw;
        diag.v2_vs_half_w = diff.sup_norm();
        double off = 1e300;
        for (const Vec2& q : shadow_ref->points)
            off = std::min(off, torus_dist(diag.points.front(), q));
        if (off < 1e300) diag.peak_offset = off;
    }
    return diag;
}

}  // namespace mft

#include "mft/mfsolve.hpp"

#include "mft/green.hpp"

#include <cmath>
#include <sstream>

namespace mft {

namespace {

void check_not_critical(double rho, const SingularData& data) {
    double bound = rho / M_PI + 1.0;
    CriticalSets cs = critical_sets(data, Rat(long(std::ceil(bound))));
    for (const auto& v : cs.sigma.values) {
        double s = double(numerator(v)) / double(denominator(v)) * M_PI;
        if (std::abs(rho - s) <= 1e-9 * M_PI)
            throw std::runtime_error("critical parameter");
    }
}

double weighted_exp_integral(const TorusField& h, const TorusField& u, TorusField& out) {
    for (size_t k = 0; k < out.mutable_values().size(); ++k)
        out.mutable_values()[k] = h.values()[k] * std::exp(u.values()[k]);
    return integrate(out);
}

}  // namespace

std::string NewtonReport::to_json() const {
    std::ostringstream os;
    os << "{\"iterations\":" << iterations
       << ",\"final_residual_sup\":" << final_residual_sup
       << ",\"converged\":" << (converged ? "true" : "false")
       << ",\"damping_history\":[";
    for (size_t i = 0; i < damping_history.size(); ++i)
        os << (i ? "," : "") << damping_history[i];
    os << "]}";
    return os.str();
}

TorusField residual_mf(const TorusField& u, const MeanFieldProblem& prob) {
    TorusField he(u.grid());
    double I = weighted_exp_integral(prob.weight, u, he);
    if (!(I > 0.0) || !std::isfinite(I))
        throw std::runtime_error("degenerate weight: normalization integral vanishes");
    TorusField r = apply_laplacian(u);
    auto& rv = r.mutable_values();
    for (size_t k = 0; k < rv.size(); ++k)
        rv[k] += prob.rho * (he.values()[k] / I - 1.0);
    return r;
}

TorusField jacobian_apply_mf(const TorusField& u, const MeanFieldProblem& prob,
                             const TorusField& phi) {
    TorusField he(u.grid());
    double I = weighted_exp_integral(prob.weight, u, he);
    TorusField hep(u.grid());
    for (size_t k = 0; k < hep.mutable_values().size(); ++k)
        hep.mutable_values()[k] = he.values()[k] * phi.values()[k];
    double J = integrate(hep);
    TorusField r = apply_laplacian(phi);
    auto& rv = r.mutable_values();
    for (size_t k = 0; k < rv.size(); ++k)
        rv[k] += prob.rho * (hep.values()[k] / I - he.values()[k] * J / (I * I));
    return r;
}

std::vector<double> gmres_solve(
    const std::function<std::vector<double>(const std::vector<double>&)>& apply,
    const std::vector<double>& rhs, double rel_tol, int max_iter) {
    const size_t N = rhs.size();
    auto dot = [N](const std::vector<double>& a, const std::vector<double>& b) {
        double s = 0.0;
        for (size_t i = 0; i < N; ++i) s += a[i] * b[i];
        return s;
    };
    double bnorm = std::sqrt(dot(rhs, rhs));
    if (bnorm == 0.0) return std::vector<double>(N, 0.0);

    std::vector<std::vector<double>> V;
    V.push_back(rhs);
    for (double& x : V[0]) x /= bnorm;
    std::vector<std::vector<double>> H;  // H[j] holds column j (size j+2)
    std::vector<double> cs, sn, beta{bnorm};

    int m = 0;
    for (; m < max_iter; ++m) {
        std::vector<double> w = apply(V[m]);
        std::vector<double> h(m + 2, 0.0);
        for (int j = 0; j <= m; ++j) {
            h[j] = dot(w, V[j]);
            for (size_t i = 0; i < N; ++i) w[i] -= h[j] * V[j][i];
        }
        double hlast = std::sqrt(dot(w, w));
        h[m + 1] = hlast;
        if (hlast > 0.0)
            for (double& x : w) x /= hlast;
        // apply accumulated Givens rotations, then form the new one
        for (int j = 0; j < m; ++j) {
            double t = cs[j] * h[j] + sn[j] * h[j + 1];
            h[j + 1] = -sn[j] * h[j] + cs[j] * h[j + 1];
            h[j] = t;
        }
        double denom = std::hypot(h[m], h[m + 1]);
        double c = denom == 0.0 ? 1.0 : h[m] / denom;
        double s = denom == 0.0 ? 0.0 : h[m + 1] / denom;
        cs.push_back(c);
        sn.push_back(s);
        h[m] = denom;
        h[m + 1] = 0.0;
        beta.push_back(-s * beta[m]);
        beta[m] *= c;
        H.push_back(h);
        double resid = std::abs(beta[m + 1]) / bnorm;
        if (resid <= rel_tol || hlast == 0.0) {
            ++m;
            break;
        }
        V.push_back(std::move(w));
    }
    // back substitution
    std::vector<double> y(m, 0.0);
    for (int i = m - 1; i >= 0; --i) {
        double s = beta[i];
        for (int j = i + 1; j < m; ++j) s -= H[j][i] * y[j];
        y[i] = s / H[i][i];
    }
    std::vector<double> x(N, 0.0);
    for (int j = 0; j < m; ++j)
        for (size_t i = 0; i < N; ++i) x[i] += y[j] * V[j][i];
    return x;
}

std::pair<TorusField, NewtonReport> newton_mf(const TorusField& u0,
                                              const MeanFieldProblem& prob, double tol) {
    check_not_critical(prob.rho, prob.singular);
    TorusGrid grid = u0.grid();
    TorusField u = u0;
    u.shift_mean_to_zero();
    NewtonReport rep;

    TorusField F = residual_mf(u, prob);
    double res = F.sup_norm();
    const int max_newton = 60;
    while (res > tol && rep.iterations < max_newton) {
        // preconditioned system (I + inv(Delta) K) delta = -inv(Delta) F
        TorusField mF = F;
        mF *= -1.0;
        mF.shift_mean_to_zero();
        TorusField b = solve_poisson(mF);
        auto apply = [&](const std::vector<double>& xv) {
            TorusField phi(grid);
            phi.mutable_values() = xv;
            TorusField Jphi = jacobian_apply_mf(u, prob, phi);
            Jphi.shift_mean_to_zero();
            return solve_poisson(Jphi).values();
        };
        std::vector<double> dv = gmres_solve(apply, b.values(), 1e-3, 60);
        TorusField delta(grid);
        delta.mutable_values() = std::move(dv);
        delta.shift_mean_to_zero();

        // backtracking: accept only a sup-residual decrease
        double t = 1.0;
        bool accepted = false;
        for (int halve = 0; halve <= 20; ++halve) {
            TorusField trial = delta;
            trial *= t;
            trial += u;
            trial.shift_mean_to_zero();
            TorusField Ft = residual_mf(trial, prob);
            double rt = Ft.sup_norm();
            if (rt < res) {
                u = std::move(trial);
                F = std::move(Ft);
                res = rt;
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
    return {u, rep};
}

TorusField solve_w(const std::vector<std::pair<Vec2, double>>& points, double rho2,
                   const TorusField& h2, const TorusField& w0, double tol) {
    // gate against the avoid-set generated by the pole strengths
    SingularData sd;
    double full = 0.0;
    for (const auto& [p, c] : points) {
        (void)p;
        full += c / M_PI;  // each pole contributes 4(1+alpha) in units of pi
    }
    double r = rho2 / M_PI;
    for (int N = 0; 4.0 * N + full <= r + 1e-6; ++N)
        if (std::abs(r - (4.0 * N + full)) <= 1e-9 && 4.0 * N + full > 0.0)
            throw std::runtime_error("critical parameter");

    TorusField weight = h2;
    for (const auto& [p, c] : points) {
        TorusField sw = singular_weight(p, c, h2.grid());
        for (size_t k = 0; k < weight.mutable_values().size(); ++k)
            weight.mutable_values()[k] *= sw.values()[k];
    }
    MeanFieldProblem prob(2.0 * rho2, std::move(weight));
    return newton_mf(w0, prob, tol).first;
}

}  // namespace mft

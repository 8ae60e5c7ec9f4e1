#pragma once
// Damped inexact Newton solver for the scalar mean-field equation
//   Delta u + rho (h e^u / int h e^u - 1) = 0
// in the mean-zero gauge, with a spectral inverse-Laplacian preconditioner.

#include "mft/genfun.hpp"
#include "mft/torus.hpp"

#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mft {

struct MeanFieldProblem {
    double rho = 0.0;
    TorusField weight;          // effective h, nonnegative, not identically 0
    SingularData singular;      // drives the critical-parameter gate

    MeanFieldProblem(double rho_, TorusField weight_)
        : rho(rho_), weight(std::move(weight_)) {}
};

struct NewtonReport {
    int iterations = 0;
    double final_residual_sup = 0.0;
    bool converged = false;
    std::vector<double> damping_history;

    std::string to_json() const;
};

struct NewtonDivergence : std::runtime_error {
    NewtonReport report;
    explicit NewtonDivergence(NewtonReport r)
        : std::runtime_error("newton iteration failed to converge"), report(std::move(r)) {}
};

// Delta u + rho (h e^u / int h e^u - 1); throws when the normalization
// integral degenerates
TorusField residual_mf(const TorusField& u, const MeanFieldProblem& prob);

// directional derivative of residual_mf at u in direction phi
TorusField jacobian_apply_mf(const TorusField& u, const MeanFieldProblem& prob,
                             const TorusField& phi);

// throws "critical parameter" when rho (in units of pi) hits the critical
// set of prob.singular, and NewtonDivergence on failure
std::pair<TorusField, NewtonReport> newton_mf(const TorusField& u0,
                                              const MeanFieldProblem& prob, double tol);

// w-equation: effective weight h2 * prod_j e^{-c_j G(x,p_j)}; the gate uses
// the avoid-set built from the c_j (c = 4 pi (1+alpha))
TorusField solve_w(const std::vector<std::pair<Vec2, double>>& points, double rho2,
                   const TorusField& h2, const TorusField& w0, double tol);

// preconditioned GMRES on mean-zero fields for operators of the form
// identity plus compact part; apply(x) must return the operator action
std::vector<double> gmres_solve(
    const std::function<std::vector<double>(const std::vector<double>&)>& apply,
    const std::vector<double>& rhs, double rel_tol, int max_iter);

}  // namespace mft

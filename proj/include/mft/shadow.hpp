#pragma once
// Coupled shadow solver: a field w driven by a mean-field equation with
// moving singular weights, and blow-up points that must sit at critical
// points of the interaction function f_Q.  Includes the analytic
// linearization, a Fourier-Galerkin eigensolver for the Morse index, and
// the degree sign bookkeeping.

#include "mft/mfsolve.hpp"
#include "mft/torus.hpp"

#include <optional>

namespace mft {

struct ShadowProblem {
    double rho2 = 0.0;
    TorusField h1, h2;
    std::vector<std::pair<Vec2, double>> fixed_singular;  // (q, alpha_q), S

    ShadowProblem(double rho2_, TorusField h1_, TorusField h2_)
        : rho2(rho2_), h1(std::move(h1_)), h2(std::move(h2_)) {}
};

struct ShadowState {
    std::vector<Vec2> points;  // the m movable blow-up points
    TorusField w;
    double residual_field_sup = 1e300;
    std::vector<double> grad_fQ_norms;
    bool converged = false;
    std::optional<int> morse_index;
    std::optional<double> min_singular_value;

    ShadowState(std::vector<Vec2> pts, TorusField w_)
        : points(std::move(pts)), w(std::move(w_)) {}
};

struct ShadowDirection {
    TorusField phi;
    std::vector<Vec2> nu;
};

// weight of the w-equation: h2 times one vanishing factor per movable point
// and per fixed singular point
TorusField shadow_weight(const ShadowProblem& prob, const std::vector<Vec2>& points);

// interaction function of the point positions (w enters through -w/2)
double f_Q_value(const std::vector<Vec2>& points, const ShadowProblem& prob,
                 const TorusField& w);
Vec2 f_Q_grad(const ShadowState& state, const ShadowProblem& prob, int i);
// second derivative in x_i; the field parts differentiate the trigonometric
// interpolant, the kernel parts are closed form
std::array<double, 4> f_Q_hess(const ShadowState& state, const ShadowProblem& prob, int i);

// nonlinear residual of the coupled system (field part, point parts)
ShadowDirection shadow_residual(const std::vector<Vec2>& points, const TorusField& w,
                                const ShadowProblem& prob);

// alternating solve: inner mean-field Newton for w, outer quasi-Newton on
// the point gradient with steps clamped to two grid cells
ShadowState newton_shadow(const ShadowProblem& prob, const ShadowState& init, double tol);

// action of the linearization at a converged state on (phi, nu)
ShadowDirection linearized_apply(const ShadowState& state, const ShadowProblem& prob,
                                 const ShadowDirection& dir);

struct MorseReport {
    int index = 0;
    std::vector<double> eigenvalues;  // the n_eigs of smallest magnitude
    double min_singular_value = 0.0;
    double operator_norm = 0.0;
};

// Fourier-Galerkin projection of the linearized operator onto modes with
// |k|_inf <= kmax plus the 2m point directions; the Morse index counts the
// spectrum on the unstable side.  Updates the state's cached fields.
MorseReport morse_index(ShadowState& state, const ShadowProblem& prob, int n_eigs,
                        int kmax = 12);

// (-1)^index and the system-side sign (-1)^{|Q|} * (-1)^index; refuses when
// the gating coefficient l_Q vanishes
std::pair<int, int> degree_signs(const ShadowState& state, const ShadowProblem& prob,
                                 double l_Q);

}  // namespace mft

#pragma once
// Green function of -Delta on the unit flat torus, mean-zero gauge:
// closed form through the first Jacobi theta function, analytic gradients
// and Hessians, the regular part, and stable singular weights e^{-cG}.

#include "mft/torus.hpp"

namespace mft {

// smooth periodic distance factor: behaves like |z| near the origin,
// positive elsewhere, exactly periodic
double theta_dist(const Vec2& z);

// G(x,p) with -Delta G = delta_p - 1 and integral zero
double green_eval(const Vec2& p, const Vec2& x);

// gradient and Hessian of G in x (closed form)
Vec2 green_grad(const Vec2& p, const Vec2& x);
std::array<double, 4> green_hess(const Vec2& p, const Vec2& x);  // row-major 2x2

// regular part R(x,p) = G(x,p) + (1/2pi) log dist(x,p); constant on the
// flat torus by translation invariance
double green_regular(const Vec2& p, const Vec2& x);
double green_regular_constant();
// gradient of x -> R(x,x) at x = p; identically zero here
Vec2 green_regular_grad_diag(const Vec2& p);

// smooth even function (1/2pi) log(|z|/dist(z)) with value 0 and Hessian
// (1/2) I at the origin; bridges the plain-log and periodic-log gauges of
// the regular part, laplacian identically 1
double green_log_ratio(const Vec2& z);

// field x -> e^{-c G(x,p)}, assembled as dist^{c/2pi} e^{-cR}; vanishes
// exactly at the pole when it sits on a grid node
TorusField singular_weight(const Vec2& p, double c, TorusGrid grid);

// independent construction: solve -Delta G = delta_p - 1 with the Dirac
// taken as the nearest-node indicator times n^2 (cross-validation only)
TorusField green_spectral_field(const Vec2& p, TorusGrid grid);

// exact integral of log theta_dist over the torus
double log_dist_integral();

// quadrature of x -> G(x,p): the log singularity is split off and
// integrated in closed form, the smooth remainder by the grid rule
double green_mean_quadrature(const Vec2& p, TorusGrid grid);

}  // namespace mft

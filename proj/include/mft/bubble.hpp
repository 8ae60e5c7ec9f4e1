#pragma once
// Explicit approximate blow-up solutions: scaled Liouville profiles, their
// radial correction ODEs, the matching constants tying the local bubbles to
// the global Green-function tail, and quantitative checks of the resulting
// mass expansion and rate law.

#include "mft/green.hpp"
#include "mft/radial.hpp"
#include "mft/shadow.hpp"

#include <optional>
#include <vector>

namespace mft {

// large root lambda > 1+alpha of lambda e^{-lambda/(1+alpha)} = delta_rho/c,
// bisection to 1e-12
double lambda_of_rho(double delta_rho, double c, double alpha);

// ---------------------------------------------------------------------------
// radial corrections in the blown-up variable y = x/eps, eps = e^{-lambda/(2(1+alpha))}

enum class ZetaMode { Zeta1, Zeta2 };

// local expansion data of the interaction field at a bubble point, expressed
// in coordinates rotated so the first-order term points along +y1
struct ZetaParams {
    double rho1 = 0.0;
    double h_p = 1.0;               // local weight density at the point
    double e1 = 0.0;                // first-order coefficient
    std::array<double, 3> quad{};   // A11, A12, A22 of the quadratic term (1/2)(Ay,y)
    int angular = 0;                // Zeta2 only: angular mode 0 or 2
    bool sine = false;              // Zeta2 mode 2: sine component instead of cosine
    double r_min = 1e-4, r_max = 1e5;
    int points_per_decade = 300;
};

// first-order (mode-1, decaying) and second-order (mode-0/2, log-growing)
// corrections to the scaled profile; the ODE residual is certified <= 1e-8
RadialProfile solve_zeta(double alpha, ZetaMode mode, const ZetaParams& par);

// matching coefficient multiplying lambda e^{-lambda/(1+alpha)}; bracket is
// the laplacian of the log of the local interaction field at the point
double d_coefficient(double alpha, double rho1, double h_p, double bracket);

// ---------------------------------------------------------------------------
// the first-order correction of the single free bubble (physical variable),
// driven by the cutoff interaction field J; normalized to vanish to first
// order at the center

struct EtaProfile {
    std::vector<RadialProfile> cos_m;  // angular cosine modes 0..K
    std::vector<RadialProfile> sin_m;  // angular sine modes 1..K
    double eval(double r, double theta) const;
};

EtaProfile solve_eta(double rho1, double lambda, double h_q,
                     const std::function<double(double, double)>& J,  // J(r, theta)
                     double r_max, int kmax = 6, int points_per_decade = 300);

// ---------------------------------------------------------------------------
// global ansatz assembly

struct BubbleProblem {
    TorusField h1_smooth;  // smooth positive factor of the first weight
    double rho2 = 0.0;
    std::vector<std::pair<Vec2, double>> singular;  // (q, alpha_q), alpha_q > 0

    // full first weight h1 = h1_smooth * prod e^{-4 pi alpha_q G(x,q)}
    double h1_eval(const Vec2& x) const;
};

struct BubbleParams {
    std::vector<Vec2> points;     // free points first, then the singular ones
    std::vector<double> alphas;   // 0 for the first m entries
    std::vector<double> lambdas;  // heights, each >= 5
    std::vector<double> amps;     // amplitudes, within 0.1 of 1
    double rho1 = 0.0;
    int m = 0;                    // number of free points
    double r0 = 0.1;              // cutoff radius
};

struct MatchingConstants {
    std::vector<double> s, d, t;       // per-point matching constants
    std::vector<double> g_star;        // Green-function tail at the point
    std::vector<double> vbar;          // mean of the single-point profile
    std::vector<double> h_p;           // local weight density
    std::vector<double> e1, rot;       // first-order data (magnitude, angle)
    std::vector<std::array<double, 3>> quad;  // rotated quadratic term (A11, A12, A22)
    std::vector<double> bracket;       // laplacian coefficient entering d
    std::vector<int> j2;               // maximal-weight singular block
};

struct AssembledBubble {
    BubbleParams params;
    MatchingConstants consts;
    TorusField field;  // the assembled sum of weighted single-point profiles

    // off-grid evaluation of one single-point profile and of the full sum
    double eval_single(int j, const Vec2& x) const;
    double eval(const Vec2& x) const;

    // corrections for the singular points (empty profiles on free points)
    std::vector<RadialProfile> zeta1, zeta2_m0, zeta2_c2, zeta2_s2;

    const BubbleProblem* prob = nullptr;  // borrowed, must outlive the bubble
};

// Build the ansatz from a converged shadow state (which supplies the second
// field) and the problem data.  Throws on: non-converged shadow, cutoff
// overlap, heights below 5, amplitudes off by more than 0.1, or a bubble
// core finer than the quadrature resolution ceiling of the grid.
AssembledBubble assemble_bubble(const BubbleParams& par, const ShadowState& shadow,
                                const BubbleProblem& prob, TorusGrid grid);

// ---------------------------------------------------------------------------
// quantitative checks

// quadrature of the full first-equation mass integral on the ansatz
double bubble_mass_integral(const AssembledBubble& b, const ShadowState& shadow);

struct MassReport {
    double lhs = 0.0;         // quadrature value
    double main_terms = 0.0;  // sum of the expansion terms below
    double rel_discrepancy = 0.0;
    std::vector<double> term_point;  // 4 pi (1+alpha_j) e^{t_j} (1 - psi_j)
    std::vector<double> term_eta;    // pi d_j e^{t_j} e^{-lambda_j/(1+alpha_j)}
    std::vector<double> term_amp;    // 8 pi (1+alpha_j) lambda_j (a_j-1) e^{t_j}
};

MassReport mass_expansion_check(const AssembledBubble& b, const ShadowState& shadow,
                                const std::vector<double>& psi_at_points = {});

// direct quadrature of the correction bracket over the cutoff disc of point
// j; the mass expansion identifies it with pi d_j e^{t_j - lambda_j/(1+alpha_j)}
double eta_flux_quadrature(const AssembledBubble& b, int j);

// the gate coefficient of the degree formula, summed over the maximal block
double l_Q_eval(const ShadowState& shadow, const BubbleProblem& prob, double rho_star);

// normalization offsets theta_j of the reduced problem
std::vector<double> theta_eval(const AssembledBubble& b, double rho_star,
                               const std::vector<double>& psi_at_points = {});

// ---------------------------------------------------------------------------
// rate law for the single free-bubble family

// the parameter value at which the ansatz of the given height is
// mass-consistent (normalization integral equal to e^{t})
double rho1_of_lambda(const ShadowState& shadow, const BubbleProblem& prob,
                      double lambda, double r0, TorusGrid grid);

struct RateFit {
    double coefficient = 0.0;  // fitted multiplier of lambda e^{-lambda}
    double analytic = 0.0;     // predicted multiplier from the local data
    std::vector<double> lambdas, offsets, predicted;
};

RateFit rate_law_fit(const ShadowState& shadow, const BubbleProblem& prob,
                     const std::vector<double>& lambdas, double r0, TorusGrid grid);

}  // namespace mft

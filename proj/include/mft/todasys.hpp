#pragma once
// Coupled two-component Toda solver on the torus: residuals in both the
// u-representation (Cartan-matrix coupling) and the v-representation
// (diagonal nonlinearities), a damped Newton-Krylov solver, natural
// parameter continuation along a path of (rho1, rho2), and blow-up
// diagnostics: peak detection, local masses, concentration, and comparison
// against a shadow-system limit.

#include "mft/mfsolve.hpp"
#include "mft/shadow.hpp"
#include "mft/torus.hpp"

#include <string>
#include <utility>
#include <vector>

namespace mft {

enum class TodaForm { U, V };

struct TodaProblem {
    TorusField h1, h2;  // positive weights of the two equations

    TodaProblem(TorusField h1_, TorusField h2_)
        : h1(std::move(h1_)), h2(std::move(h2_)) {}
};

// mean-zero pair of fields in either representation; the two forms are
// related by the exact linear change of variables v1 = (2u1+u2)/3,
// v2 = (u1+2u2)/3
struct TodaState {
    TodaForm form = TodaForm::V;
    TorusField f1, f2;
    double rho1 = 0.0, rho2 = 0.0;

    TodaState(TodaForm form_, TorusField f1_, TorusField f2_, double rho1_,
              double rho2_)
        : form(form_), f1(std::move(f1_)), f2(std::move(f2_)), rho1(rho1_),
          rho2(rho2_) {}
};

// residual pair of the coupled system in the state's own representation;
// each component is structurally mean-zero. Throws when a normalization
// integral degenerates.
std::pair<TorusField, TorusField> residual_toda(const TodaState& state,
                                                const TodaProblem& prob);

// exact change of representation (the 2x2 transform and its inverse)
TodaState transform_uv(const TodaState& state);

// directional derivative of the v-form residual at a v-form state
std::pair<TorusField, TorusField> jacobian_apply_toda(const TodaState& state,
                                                      const TodaProblem& prob,
                                                      const TorusField& phi1,
                                                      const TorusField& phi2);

// Damped Newton-Krylov solve of the coupled system at the given parameters,
// from the given initial state (any form; the result keeps that form).
// Gates: rho1 in (0,4pi) or (4pi,8pi), rho2 off the 4pi lattice. Throws
// NewtonDivergence on failure.
std::pair<TodaState, NewtonReport> newton_toda(const TodaState& state0,
                                               const TodaProblem& prob,
                                               std::pair<double, double> rho,
                                               double tol);

// Bordered Newton solve with the first parameter freed: the height of the
// first field at the anchor point is pinned to `height` and rho1 becomes an
// unknown. This conditions the solve near a blow-up family, where the
// fixed-parameter Jacobian carries a soft mode along the family. The anchor
// snaps to the nearest grid node; rho2 is taken from the initial state.
// Returns the state (with its solved rho1) in the input representation.
std::pair<TodaState, NewtonReport> newton_toda_anchored(const TodaState& state0,
                                                        const TodaProblem& prob,
                                                        const Vec2& anchor,
                                                        double height, double tol);

// step controller of the natural-parameter continuation; distances are
// measured along the (rho1, rho2) path
struct ContinuationController {
    double step = 0.1 * M_PI;        // initial step
    double step_min = 1e-4 * M_PI;   // terminate below this
    double step_max = 0.2 * M_PI;
    double grow = 1.3;               // growth factor ...
    int grow_after = 3;              // ... applied after this many successes
    double tol = 1e-10;              // corrector tolerance
    double blowup_max = 12.0;        // sup-field trigger
    double core_cells = 8.0;         // core-width trigger, in grid cells
    int max_states = 4000;           // hard guard on the branch length
};

struct ContinuationRun {
    std::vector<TodaState> branch;       // every accepted state, start included
    std::vector<NewtonReport> reports;   // one per accepted corrector solve
    std::string termination;             // "path end", "step underflow",
                                         // "blow-up", "state budget exhausted"
};

// Secant-predictor / Newton-corrector continuation along the piecewise
// linear parameter path; steps halve on corrector failure and grow after
// repeated successes. Stops at the path end, on step underflow, or when a
// blow-up trigger fires (recorded in `termination`).
ContinuationRun continue_branch(const TodaState& start, const TodaProblem& prob,
                                const std::vector<std::pair<double, double>>& path,
                                const ContinuationController& ctrl = {});

// Peak-local data of a state: positions, local masses of both normalized
// densities on three ball radii, nearest classification label, and the
// concentration ratio of the first density in the 0.1-ball.
struct BlowupDiagnostics {
    std::vector<Vec2> points;
    std::vector<std::array<double, 3>> sigma1, sigma2;  // delta = 0.05, 0.1, 0.2
    std::vector<std::string> labels;                    // "(2,4)", "(4,2)", "(4,4)"
    std::vector<double> concentration;                  // first-density mass ratio
    double core_width_cells = 0.0;                      // width of the sharpest peak
    // filled only when a shadow reference is supplied
    double v2_vs_half_w = -1.0;   // sup |v2 - w/2|
    double peak_offset = -1.0;    // distance of the main peak to the shadow point
};

// masses use the normalization that makes each weighted exponential a
// probability density; no peak above threshold yields empty diagnostics
BlowupDiagnostics blowup_diagnostics(const TodaState& state, const TodaProblem& prob,
                                     const ShadowState* shadow_ref = nullptr);

}  // namespace mft

#pragma once
// Command-line front end: JSON run configurations, orchestration of the
// degree, Green-function, solver and continuation commands, machine-readable
// reports, and CSV plot data.  Parameters that live on pi-lattices are kept
// as exact rationals so the critical-set gates never suffer rounding.

#include "mft/genfun.hpp"
#include "mft/torus.hpp"

#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mft {

// config or gate problem detected before/while dispatching; exit code 2
struct CliValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
// requested computation cannot be represented on the requested grid; exit 4
struct CliResolutionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// one trigonometric term  coef * f1(2 pi k1 x1) * f2(2 pi k2 x2) with
// f in {cos, sin}; a sum of terms specifies a weight function
struct WeightTerm {
    double coef = 0.0;
    int k1 = 0, k2 = 0;
    bool sin1 = false, sin2 = false;
};

struct WeightSpec {
    std::vector<WeightTerm> terms;  // empty list means identically 1

    TorusField build(TorusGrid grid) const;
};

struct ControllerSpec {          // continuation controller, in units of pi
    double step = 0.1;
    double step_min = 1e-4;
    double step_max = 0.2;
    double tol = 1e-10;
};

struct RunConfig {
    std::string command;         // degree, green-check, solve-mf, solve-shadow,
                                 // solve-toda, continue, bubble-check
    int grid = 128;
    long seed = 0;
    std::string out = "out";
    bool quiet = false;
    double tol = 1e-10;

    // degree parameters
    long chi = 2;
    std::string window = "(4pi,8pi)";
    int k_max = 3;
    std::vector<Rat> alphas, betas;
    std::optional<Rat> rho_over_pi;  // mean-field degree when present

    // solver parameters; rho's are exact rational multiples of pi
    Rat rho1_over_pi = Rat(2), rho2_over_pi = Rat(2);
    WeightSpec h1, h2;
    std::vector<Vec2> points;                       // movable-point seeds
    std::vector<std::pair<Vec2, Rat>> singular;     // fixed singular data
    std::vector<std::pair<Rat, Rat>> path_over_pi;  // continuation path
    ControllerSpec controller;
    std::vector<double> lambdas;                    // bubble-check heights

    // strict parse of the canonical JSON layout; unknown keys are rejected
    static RunConfig parse(const std::string& json_text);
    std::string serialize() const;
};

struct RunCheck {
    std::string name;
    bool pass = false;
};

struct RunReport {
    std::string config_echo;                                   // canonical JSON
    std::vector<std::pair<std::string, std::string>> results;  // key, rendered value
    std::vector<std::string> artifacts;                        // files written
    std::vector<RunCheck> checks;
    double elapsed_ms = 0.0;

    bool all_pass() const;
    std::string to_json() const;
};

// executes the configured command, writes artifacts under cfg.out, and
// returns the structured report; throws CliValidationError,
// CliResolutionError, or NewtonDivergence
RunReport run(const RunConfig& cfg);

// flag parsing (--config, --out, --seed, --grid, --quiet) and dispatch;
// returns the process exit code: 0 all checks pass, 2 validation,
// 3 solver divergence, 4 resolution
int cli_main(int argc, char** argv);

}  // namespace mft

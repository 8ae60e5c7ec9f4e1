#pragma once
// Linear radial two-point problems on logarithmically spaced grids.  The
// profiles solved here span many scales (bubble cores of width e^{-lambda/2}
// against O(1) cutoff radii), hence the log grid and the asymptotic boundary
// rows instead of plain Dirichlet conditions.

#include <functional>
#include <string>
#include <vector>

namespace mft {

struct LogGrid {
    std::vector<double> r;

    LogGrid() = default;
    // nodes log-spaced between r_min and r_max inclusive
    LogGrid(double r_min, double r_max, int n);
    int size() const { return int(r.size()); }
};

// outer boundary treatment: either a prescribed power decay v ~ r^{-p},
// or the free-log normalization that admits v ~ c log r + d at infinity
// while forcing both the constant and log parts to vanish at the origin
struct OuterBC {
    enum Kind { PowerDecay, FreeLog } kind = PowerDecay;
    double exponent = 0.0;

    static OuterBC power(double p) { return {PowerDecay, p}; }
    static OuterBC free_log() { return {FreeLog, 0.0}; }
};

struct RadialProfile {
    std::vector<double> r, v;
    double inner_power = 0.0;  // v ~ r^{inner_power} below the first node
    double decay_power = 0.0;  // boundary behavior tag at infinity

    double eval(double radius) const;  // log-linear interpolation
    void write_csv(const std::string& path) const;
};

// Solve  v'' + v'/r - m^2 v / r^2 + W(r) (v + f(r)) = 0  on the grid.
// The inner row imposes the regular branch v ~ r^{inner_power}; the outer
// row imposes the requested asymptotic condition.
RadialProfile solve_radial_bvp(const LogGrid& grid, int angular_mode,
                               const std::vector<double>& W,
                               const std::vector<double>& f, double inner_power,
                               OuterBC outer);

// max interior residual of the discrete equation relative to the row
// magnitude at the profile scale; cheap certificate that the tridiagonal
// solve did not lose accuracy
double radial_residual(const RadialProfile& p, int angular_mode,
                       const std::vector<double>& W, const std::vector<double>& f);

}  // namespace mft

#pragma once
// Periodic grids on the unit flat torus with pseudospectral calculus:
// Laplacian, Poisson inverse, gradients, quadrature, point evaluation of the
// trigonometric interpolant, and CSV / raw binary field formats.

#include <array>
#include <complex>
#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace mft {

using Vec2 = std::array<double, 2>;

struct TorusGrid {
    int n = 0;

    explicit TorusGrid(int n_) : n(n_) {
        if (n < 16 || (n & (n - 1)) != 0)
            throw std::invalid_argument("grid size must be a power of two >= 16");
    }
    double spacing() const { return 1.0 / n; }
    double cell_area() const { return 1.0 / (double(n) * n); }
    bool operator==(const TorusGrid& o) const { return n == o.n; }
};

class TorusField {
  public:
    explicit TorusField(TorusGrid grid) : grid_(grid), v_(size_t(grid.n) * grid.n, 0.0) {}

    const TorusGrid& grid() const { return grid_; }
    int n() const { return grid_.n; }

    double& at(int i, int j) { hat_valid_ = false; return v_[idx(i, j)]; }
    double operator()(int i, int j) const { return v_[idx(i, j)]; }
    const std::vector<double>& values() const { return v_; }
    std::vector<double>& mutable_values() { hat_valid_ = false; return v_; }

    // node coordinates: x = (i/n, j/n), row index i along x1
    double coord1(int i) const { return i * grid_.spacing(); }
    double coord2(int j) const { return j * grid_.spacing(); }

    double mean() const;
    double sup_norm() const;
    double l2_norm() const;  // sqrt of cell-area-weighted sum of squares
    void shift_mean_to_zero();

    // Fourier coefficients f_hat[k1*n+k2] wrt e^{2 pi i (k1 x1 + k2 x2)},
    // normalized so f(x) = sum f_hat e^{2 pi i k.x}; cached until mutation.
    const std::vector<std::complex<double>>& spectral() const;

    // value / gradient of the trigonometric interpolant at an arbitrary point
    double eval(const Vec2& x) const;
    Vec2 grad(const Vec2& x) const;

    TorusField& operator+=(const TorusField& o);
    TorusField& operator-=(const TorusField& o);
    TorusField& operator*=(double s);

  private:
    size_t idx(int i, int j) const {
        i &= grid_.n - 1;
        j &= grid_.n - 1;
        return size_t(i) * grid_.n + j;
    }
    TorusGrid grid_;
    std::vector<double> v_;
    mutable std::vector<std::complex<double>> hat_;
    mutable bool hat_valid_ = false;
};

// field from Fourier coefficients (inverse transform)
TorusField field_from_spectral(TorusGrid grid, const std::vector<std::complex<double>>& hat);

// truncated-spectrum point evaluator: keeps only modes above a relative
// magnitude threshold, which makes scattered off-grid evaluation of smooth
// fields cheap (polar quadratures hit hundreds of thousands of points)
class SparseSpectral {
  public:
    SparseSpectral(const TorusField& f, double rel_tol = 1e-14);
    double eval(const Vec2& x) const;
    size_t term_count() const { return k1_.size(); }

  private:
    std::vector<double> k1_, k2_;  // frequencies times 2 pi
    std::vector<std::complex<double>> c_;
    double mean_ = 0.0;
};

// pointwise helpers
TorusField apply_laplacian(const TorusField& f);
std::pair<TorusField, TorusField> gradient(const TorusField& f);

// mean-zero u with laplacian(u) = rhs - mean(rhs); throws when the mean of
// rhs exceeds 1e-10 * sup|rhs| (solvability gauge)
TorusField solve_poisson(const TorusField& rhs);

double integrate(const TorusField& f);

// sample a smooth function onto the grid
template <typename F>
TorusField sample(TorusGrid grid, F&& f) {
    TorusField out(grid);
    for (int i = 0; i < grid.n; ++i)
        for (int j = 0; j < grid.n; ++j)
            out.at(i, j) = f(i * grid.spacing(), j * grid.spacing());
    return out;
}

// CSV: header line "n=<n>", then n rows of n comma-separated values.
void write_csv(const TorusField& f, std::ostream& os);
TorusField read_csv(std::istream& is);
// binary: int64 n little-endian, then n*n doubles row-major little-endian.
void write_binary(const TorusField& f, std::ostream& os);
TorusField read_binary(std::istream& is);

void write_csv_file(const TorusField& f, const std::string& path);
TorusField read_csv_file(const std::string& path);
void write_binary_file(const TorusField& f, const std::string& path);
TorusField read_binary_file(const std::string& path);

}  // namespace mft

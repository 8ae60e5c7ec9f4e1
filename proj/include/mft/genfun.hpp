#pragma once
// Exact arithmetic for the degree-counting formulas: generalized power
// series with rational exponents and arbitrary-precision integer
// coefficients, plus the critical parameter sets.

#include <boost/multiprecision/cpp_int.hpp>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace mft {

using Int = boost::multiprecision::cpp_int;
using Rat = boost::multiprecision::cpp_rational;

// Formal series sum_a c_a x^a with a >= 0 rational, c_a integer.
// Invariants: no zero coefficients stored; all exponents < truncation_bound.
struct GeneralizedSeries {
    std::map<Rat, Int> terms;
    Rat truncation_bound;

    explicit GeneralizedSeries(Rat bound) : truncation_bound(std::move(bound)) {
        if (truncation_bound <= 0)
            throw std::invalid_argument("truncation bound must be positive");
    }

    void add_term(const Rat& exp, const Int& coeff);
    Int coeff(const Rat& exp) const;
    // Drops exponents >= new_bound.  new_bound must not exceed the current one.
    GeneralizedSeries truncated(const Rat& new_bound) const;

    GeneralizedSeries operator*(const GeneralizedSeries& other) const;
    GeneralizedSeries operator+(const GeneralizedSeries& other) const;

    // Sum of coefficients with exponent < x.
    Int partial_sum_below(const Rat& x) const;

    std::string to_json() const;
};

// (1-x)^e for any integer e, truncated at bound.  Negative e gives the
// infinite binomial series.
GeneralizedSeries one_minus_x_pow(long e, const Rat& bound);

struct SingularData {
    long chi = 0;               // Euler characteristic
    std::vector<Rat> alphas;    // vortex weights, all >= 0
    std::vector<Rat> betas;     // weights of the second singular set, all >= 0

    void validate() const;
};

// Sorted positive rationals, stored in units of pi.
struct CriticalSet {
    std::vector<Rat> values;
    bool contains(const Rat& v) const;
};

struct CriticalSets {
    CriticalSet sigma;    // mean-field critical parameters
    CriticalSet sigma1;   // integer multiples of 4 pi
    CriticalSet sigma2;   // shadow-system avoid-set
};

// Product form (1-x)^{chi - |S1|} * prod_q (1 - x^{1+alpha_q}),
// i.e. the geometric factor raised to -chi + |S1|.
GeneralizedSeries expand_xi0(const SingularData& data, const Rat& bound);

// Same with the geometric exponent raised by one; its k-th coefficient is
// the degree on the k-th parameter window when all alphas are integers.
GeneralizedSeries expand_xi1(const SingularData& data, const Rat& bound);

// [1 - chi(1+x)] * expand_xi1; coefficient k gives the Toda degree on the
// second rho_1 window.
GeneralizedSeries expand_xi2(const SingularData& data, const Rat& bound);

// Degree of the scalar mean-field equation at rho = rho_over_pi * pi.
// Throws if the parameter is critical or nonpositive.
Int mean_field_degree(const SingularData& data, const Rat& rho_over_pi);

// Coefficient of x^k in (1-x)^{chi-1}, via the falling-factorial formula.
// k = -1 returns 0.
Int b_coeff(long chi, long k);

enum class Rho1Window { below_4pi, between_4pi_8pi };

// Degree of the Toda system for rho_2 in the k-th window of width 4 pi.
Int toda_degree(long chi, Rho1Window window, long k);

// Degree of the shadow system: chi * (b_k + b_{k-1}).
Int shadow_degree(long chi, long k);

// All three critical sets up to bound_over_pi * pi.  The second singular
// set's weights (betas) drive sigma2; sigma uses alphas only.
CriticalSets critical_sets(const SingularData& data, const Rat& bound_over_pi);

}  // namespace mft

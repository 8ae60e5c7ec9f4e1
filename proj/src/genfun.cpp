#include "mft/genfun.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace mft {

void GeneralizedSeries::add_term(const Rat& exp, const Int& coeff) {
    if (exp < 0) throw std::invalid_argument("negative exponent");
    if (exp >= truncation_bound || coeff == 0) return;
    auto it = terms.find(exp);
    if (it == terms.end()) {
        terms.emplace(exp, coeff);
    } else {
        it->second += coeff;
        if (it->second == 0) terms.erase(it);
    }
}

Int GeneralizedSeries::coeff(const Rat& exp) const {
    auto it = terms.find(exp);
    return it == terms.end() ? Int(0) : it->second;
}

GeneralizedSeries GeneralizedSeries::truncated(const Rat& new_bound) const {
    GeneralizedSeries out(new_bound);
    for (const auto& [e, c] : terms) {
        if (e >= new_bound) break;
        out.terms.emplace(e, c);
    }
    return out;
}

GeneralizedSeries GeneralizedSeries::operator*(const GeneralizedSeries& other) const {
    GeneralizedSeries out(std::min(truncation_bound, other.truncation_bound));
    for (const auto& [e1, c1] : terms) {
        if (e1 >= out.truncation_bound) break;
        for (const auto& [e2, c2] : other.terms) {
            Rat e = e1 + e2;
            if (e >= out.truncation_bound) break;
            out.add_term(e, c1 * c2);
        }
    }
    return out;
}

GeneralizedSeries GeneralizedSeries::operator+(const GeneralizedSeries& other) const {
    GeneralizedSeries out(std::min(truncation_bound, other.truncation_bound));
    for (const auto& [e, c] : terms) out.add_term(e, c);
    for (const auto& [e, c] : other.terms) out.add_term(e, c);
    return out;
}

Int GeneralizedSeries::partial_sum_below(const Rat& x) const {
    Int s = 0;
    for (const auto& [e, c] : terms) {
        if (e >= x) break;
        s += c;
    }
    return s;
}

std::string GeneralizedSeries::to_json() const {
    std::ostringstream os;
    os << "[";
    bool first = true;
    for (const auto& [e, c] : terms) {
        if (!first) os << ",";
        first = false;
        os << "{\"exponent\":\"" << numerator(e) << "/" << denominator(e)
           << "\",\"coeff\":\"" << c << "\"}";
    }
    os << "]";
    return os.str();
}

GeneralizedSeries one_minus_x_pow(long e, const Rat& bound) {
    GeneralizedSeries out(bound);
    if (e >= 0) {
        // finite binomial expansion with alternating signs
        Int c = 1;
        for (long k = 0; k <= e; ++k) {
            if (Rat(k) >= bound) break;
            out.add_term(Rat(k), (k % 2 == 0) ? c : -c);
            c = c * (e - k) / (k + 1);
        }
    } else {
        // (1-x)^{-m}: coefficients C(m-1+k, k), all positive
        long m = -e;
        Int c = 1;
        for (long k = 0; Rat(k) < bound; ++k) {
            out.add_term(Rat(k), c);
            c = c * (m + k) / (k + 1);
        }
    }
    return out;
}

void SingularData::validate() const {
    for (const auto& a : alphas)
        if (a < 0) throw std::invalid_argument("negative vortex weight");
    for (const auto& b : betas)
        if (b < 0) throw std::invalid_argument("negative vortex weight");
}

bool CriticalSet::contains(const Rat& v) const {
    return std::binary_search(values.begin(), values.end(), v);
}

namespace {

// product form with geometric exponent g = -chi + extra + |S1|
GeneralizedSeries expand_product(const SingularData& data, long extra, const Rat& bound) {
    data.validate();
    if (bound <= 0) throw std::invalid_argument("bound must be positive");
    // work one unit past the requested bound, re-truncate at the end
    Rat work = bound + 1;
    long g = -data.chi + extra + static_cast<long>(data.alphas.size());
    GeneralizedSeries s = one_minus_x_pow(-g, work);
    for (const auto& a : data.alphas) {
        GeneralizedSeries f(work);
        f.add_term(Rat(0), 1);
        f.add_term(a + 1, -1);
        s = s * f;
    }
    return s.truncated(bound);
}

}  // namespace

GeneralizedSeries expand_xi0(const SingularData& data, const Rat& bound) {
    return expand_product(data, 0, bound);
}

GeneralizedSeries expand_xi1(const SingularData& data, const Rat& bound) {
    return expand_product(data, 1, bound);
}

GeneralizedSeries expand_xi2(const SingularData& data, const Rat& bound) {
    Rat work = bound + 2;
    GeneralizedSeries xi1 = expand_xi1(data, work);
    // multiplier 1 - chi*(1+x)
    GeneralizedSeries mult(work);
    mult.add_term(Rat(0), Int(1) - data.chi);
    mult.add_term(Rat(1), -Int(data.chi));
    return (mult * xi1).truncated(bound);
}

Int mean_field_degree(const SingularData& data, const Rat& rho_over_pi) {
    if (rho_over_pi <= 0) throw std::invalid_argument("rho must be positive");
    CriticalSets cs = critical_sets(data, rho_over_pi);
    if (cs.sigma.contains(rho_over_pi))
        throw std::runtime_error("critical parameter");
    Rat x = rho_over_pi / 8;
    GeneralizedSeries xi0 = expand_xi0(data, x + 1);
    return xi0.partial_sum_below(x);
}

Int b_coeff(long chi, long k) {
    if (k < -1) throw std::invalid_argument("k must be >= -1");
    if (k == -1) return 0;
    if (k == 0) return 1;
    Int num = 1;
    for (long i = 1; i <= k; ++i) num *= Int(i) - chi;
    Int den = 1;
    for (long i = 2; i <= k; ++i) den *= i;
    return num / den;
}

Int toda_degree(long chi, Rho1Window window, long k) {
    if (k < 0) throw std::invalid_argument("k must be >= 0");
    Int bk = b_coeff(chi, k);
    if (window == Rho1Window::below_4pi) return bk;
    return bk - Int(chi) * (bk + b_coeff(chi, k - 1));
}

Int shadow_degree(long chi, long k) {
    if (k < 0) throw std::invalid_argument("k must be >= 0");
    return Int(chi) * (b_coeff(chi, k) + b_coeff(chi, k - 1));
}

CriticalSets critical_sets(const SingularData& data, const Rat& bound_over_pi) {
    data.validate();
    if (bound_over_pi <= 0) throw std::invalid_argument("bound must be positive");
    CriticalSets out;

    // sigma: 8N + sum over subsets of 8(1+alpha_q), zero excluded
    std::set<Rat> sig;
    std::vector<Rat> subset_sums{Rat(0)};
    for (const auto& a : data.alphas) {
        size_t sz = subset_sums.size();
        for (size_t i = 0; i < sz; ++i) {
            Rat s = subset_sums[i] + 8 * (a + 1);
            if (s <= bound_over_pi) subset_sums.push_back(s);
        }
    }
    for (const auto& s : subset_sums)
        for (Rat v = s; v <= bound_over_pi; v += 8)
            if (v > 0) sig.insert(v);
    out.sigma.values.assign(sig.begin(), sig.end());

    for (Rat v = 4; v <= bound_over_pi; v += 4)
        out.sigma1.values.push_back(v);

    // sigma2: 4N plus the full sum over the second singular set
    Rat full = 0;
    for (const auto& b : data.betas) full += 4 * (b + 1);
    std::set<Rat> sig2;
    for (Rat v = full; v <= bound_over_pi; v += 4)
        if (v > 0) sig2.insert(v);
    out.sigma2.values.assign(sig2.begin(), sig2.end());
    return out;
}

}  // namespace mft

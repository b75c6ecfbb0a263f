// Test-only oracles, independent of the library implementations they check.
#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

namespace oracle {

// Isserlis / Wick: E[X_{i_1} ... X_{i_k}] for a mean-zero Gaussian family,
// by explicit enumeration of pair partitions.
inline double wick_moment(const std::vector<int>& idx,
                          const std::function<double(int, int)>& cov) {
    if (idx.empty()) return 1.0;
    if (idx.size() % 2 != 0) return 0.0;
    std::vector<int> rest(idx.begin() + 1, idx.end());
    double total = 0.0;
    for (std::size_t k = 0; k < rest.size(); ++k) {
        std::vector<int> next;
        for (std::size_t j = 0; j < rest.size(); ++j)
            if (j != k) next.push_back(rest[j]);
        total += cov(idx[0], rest[k]) * wick_moment(next, cov);
    }
    return total;
}

// Hermite polynomial through the Rodrigues-type definition: writes
// d^n/dx^n e^{-x^2/2} = P_n(x) e^{-x^2/2} with P_{n+1} = P_n' - x P_n and
// returns (-1)^n P_n(x). Independent of the three-term recurrence.
inline double hermite_by_differentiation(int n, double x) {
    std::vector<double> p{1.0};  // coefficients of P, ascending powers
    for (int step = 0; step < n; ++step) {
        std::vector<double> next(p.size() + 1, 0.0);
        for (std::size_t k = 1; k < p.size(); ++k) next[k - 1] += static_cast<double>(k) * p[k];
        for (std::size_t k = 0; k < p.size(); ++k) next[k + 1] -= p[k];
        p = std::move(next);
    }
    double value = 0.0;
    for (std::size_t k = p.size(); k-- > 0;) value = value * x + p[k];
    return (n % 2 == 0 ? value : -value);
}

// exact factorial over exact integers, for cross-checking double-valued
// combinatorial constants up to the small orders used here
inline long long exact_factorial(int n) {
    long long f = 1;
    for (int k = 2; k <= n; ++k) f *= k;
    return f;
}

inline long long exact_binomial(int n, int k) {
    if (k < 0 || k > n) return 0;
    long long num = 1, den = 1;
    for (int j = 1; j <= k; ++j) {
        num *= (n - k + j);
        den *= j;
    }
    return num / den;
}

}  // namespace oracle

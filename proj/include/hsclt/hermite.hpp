// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <hsclt/linalg.hpp>
#include <hsclt/rng.hpp>

namespace hsclt {

// Generalized Hermite expansion machinery: multi-indexed Hermite products
// over score coordinates, the coefficient tables c_{i,l} of an operator G,
// and their translation into symmetric chaos coefficient arrays b_{i,j}.
// Probabilists' convention throughout: E H_n(X) H_m(Y) = n! (E XY)^n d_nm
// for jointly standard normal X, Y.

/// H_n(x), probabilists', via H_{n+1}(x) = x H_n(x) - n H_{n-1}(x).
inline double hermite_eval(int n, double x) {
    if (n < 0) throw std::invalid_argument("hermite_eval: negative order");
    if (n == 0) return 1.0;
    double prev = 1.0;
    double cur = x;
    for (int k = 1; k < n; ++k) {
        const double next = x * cur - static_cast<double>(k) * prev;
        prev = cur;
        cur = next;
    }
    return cur;
}

inline double factorial(int n) {
    double f = 1.0;
    for (int k = 2; k <= n; ++k) f *= k;
    return f;
}

/// Sparse multi-index l: finitely many positions m >= 1 with exponent
/// l_m >= 1. degree = sum of exponents, max_pos = largest active position.
class MultiIndex {
  public:
    MultiIndex() = default;
    MultiIndex(std::initializer_list<std::pair<int, int>> init)
        : MultiIndex(std::vector<std::pair<int, int>>(init)) {}
    explicit MultiIndex(std::vector<std::pair<int, int>> entries) : entries_(std::move(entries)) {
        for (auto& [pos, exp] : entries_) {
            if (pos < 1) throw std::invalid_argument("MultiIndex: positions are 1-based");
            if (exp < 1) throw std::invalid_argument("MultiIndex: stored exponents must be >= 1");
        }
        std::sort(entries_.begin(), entries_.end());
        for (std::size_t k = 1; k < entries_.size(); ++k)
            if (entries_[k].first == entries_[k - 1].first)
                throw std::invalid_argument("MultiIndex: duplicate position");
    }

    static MultiIndex single(int pos, int exp) { return MultiIndex({{pos, exp}}); }

    const std::vector<std::pair<int, int>>& support() const { return entries_; }
    bool empty() const { return entries_.empty(); }

    int degree() const {
        int d = 0;
        for (const auto& [pos, exp] : entries_) d += exp;
        return d;
    }
    int max_pos() const { return entries_.empty() ? 0 : entries_.back().first; }

    /// product of l_m! over the support
    double exponent_factorial() const {
        double f = 1.0;
        for (const auto& [pos, exp] : entries_) f *= factorial(exp);
        return f;
    }

    /// positions repeated by exponent, ascending: {1:1, 2:2} -> (1,2,2)
    std::vector<int> as_tuple() const {
        std::vector<int> t;
        for (const auto& [pos, exp] : entries_)
            for (int k = 0; k < exp; ++k) t.push_back(pos);
        return t;
    }

    bool operator==(const MultiIndex& other) const { return entries_ == other.entries_; }
    bool operator<(const MultiIndex& other) const { return entries_ < other.entries_; }

    std::string to_string() const {
        std::string s = "{";
        for (std::size_t k = 0; k < entries_.size(); ++k) {
            if (k) s += ",";
            s += std::to_string(entries_[k].first) + ":" + std::to_string(entries_[k].second);
        }
        return s + "}";
    }

  private:
    std::vector<std::pair<int, int>> entries_;
};

/// H_l(x) = prod_m H_{l_m}(w_m) over the support of l, where w are the score
/// coordinates. The empty product is 1.
inline double hermite_product_eval(const MultiIndex& l, std::span<const double> scores) {
    if (l.max_pos() > static_cast<int>(scores.size()))
        throw std::invalid_argument("hermite_product_eval: score vector shorter than max_pos");
    double prod = 1.0;
    for (const auto& [pos, exp] : l.support()) prod *= hermite_eval(exp, scores[pos - 1]);
    return prod;
}

struct HermiteEntry {
    int i = 1;  // output basis index, 1-based
    MultiIndex l;
    double c = 0.0;
    double std_error = 0.0;
};

/// Table of generalized Hermite coefficients c_{i,l} of an operator G,
/// truncated at degree_cap and index_cap.
struct HermiteCoefficients {
    int degree_cap = 6;
    int index_cap = 0;
    int output_dim = 0;
    std::vector<HermiteEntry> entries;

    /// sum over the table of (prod l_m!) c^2 = stored part of E||G[X]||^2
    double weighted_square_sum() const {
        double s = 0.0;
        for (const auto& e : entries) s += e.l.exponent_factorial() * e.c * e.c;
        return s;
    }

    double weighted_square_sum_at_degree(int p) const {
        double s = 0.0;
        for (const auto& e : entries)
            if (e.l.degree() == p) s += e.l.exponent_factorial() * e.c * e.c;
        return s;
    }

    nlohmann::json to_json() const {
        nlohmann::json items = nlohmann::json::array();
        for (const auto& e : entries) {
            nlohmann::json l = nlohmann::json::object();
            for (const auto& [pos, exp] : e.l.support()) l[std::to_string(pos)] = exp;
            items.push_back({{"i", e.i}, {"l", std::move(l)}, {"c", e.c}, {"stderr", e.std_error}});
        }
        return {{"degree_cap", degree_cap},
                {"index_cap", index_cap},
                {"output_dim", output_dim},
                {"entries", std::move(items)}};
    }
};

enum class ClosedFormKind { Identity, Covariance, Eigenvalue };

/// Exact coefficient tables for the three analytically solved operators.
///   identity:          c_{i, {i:1}} = sqrt(lambda_i), rank 1
///   covariance x(x)x-Q: c_{(r,s), {r:1,s:1}} = sqrt(lambda_r lambda_s) (r != s),
///                       c_{(r,r), {r:2}}     = lambda_r, rank 2
///   eigenvalue(j):     c_{1, {j:2}} = lambda_j, rank 2
/// Covariance output indices are the flattened pairs (r,s) -> (r-1) D + s.
inline HermiteCoefficients closed_form_coefficients(ClosedFormKind kind,
                                                    const std::vector<double>& spectrum,
                                                    int degree_cap = 6, int index_cap = 0,
                                                    int eigen_index = 1) {
    if (degree_cap < 2) throw std::invalid_argument("closed_form_coefficients: degree_cap < 2");
    const int dim = static_cast<int>(spectrum.size());
    if (index_cap <= 0 || index_cap > dim) index_cap = dim;
    HermiteCoefficients table;
    table.degree_cap = degree_cap;
    table.index_cap = index_cap;
    switch (kind) {
        case ClosedFormKind::Identity:
            table.output_dim = index_cap;
            for (int i = 1; i <= index_cap; ++i)
                table.entries.push_back({i, MultiIndex::single(i, 1), std::sqrt(spectrum[i - 1]), 0.0});
            break;
        case ClosedFormKind::Covariance:
            table.output_dim = index_cap * index_cap;
            for (int r = 1; r <= index_cap; ++r)
                for (int s = 1; s <= index_cap; ++s) {
                    const int i = (r - 1) * index_cap + s;
                    if (r == s) {
                        table.entries.push_back({i, MultiIndex::single(r, 2), spectrum[r - 1], 0.0});
                    } else {
                        table.entries.push_back(
                            {i, MultiIndex({{r, 1}, {s, 1}}),
                             std::sqrt(spectrum[r - 1] * spectrum[s - 1]), 0.0});
                    }
                }
            break;
        case ClosedFormKind::Eigenvalue:
            if (eigen_index < 1 || eigen_index > dim)
                throw std::invalid_argument("closed_form_coefficients: eigen index out of range");
            table.output_dim = 1;
            table.entries.push_back(
                {1, MultiIndex::single(eigen_index, 2), spectrum[eigen_index - 1], 0.0});
            break;
    }
    return table;
}

/// Hermite rank: minimum degree carrying a coefficient above the threshold.
inline int hermite_rank(const HermiteCoefficients& coeffs, double threshold) {
    int rank = -1;
    for (const auto& e : coeffs.entries) {
        if (e.l.degree() == 0) continue;
        if (std::abs(e.c) > threshold && (rank < 0 || e.l.degree() < rank)) rank = e.l.degree();
    }
    if (rank < 0)
        throw std::runtime_error("hermite_rank: all coefficients below threshold " +
                                 std::to_string(threshold));
    return rank;
}

struct RankReport {
    int rank = 0;
    double threshold = 0.0;
    double margin = 0.0;  // largest |c| at the rank level divided by threshold
    std::string method;   // "closed-form" or "monte-carlo"
    // second-moment mass not captured by the (truncated) table, relative to
    // E||G - EG||^2; zero for exact tables, a completeness diagnostic for
    // Monte Carlo ones
    double parseval_defect = 0.0;
};

inline RankReport rank_report(const HermiteCoefficients& coeffs, double threshold,
                              std::string method = "closed-form") {
    RankReport report;
    report.rank = hermite_rank(coeffs, threshold);
    report.threshold = threshold;
    double best = 0.0;
    for (const auto& e : coeffs.entries)
        if (e.l.degree() == report.rank) best = std::max(best, std::abs(e.c));
    report.margin = threshold > 0.0 ? best / threshold : std::numeric_limits<double>::infinity();
    report.method = std::move(method);
    return report;
}

struct ChaosEntry {
    int i = 1;                // output basis index, 1-based
    std::vector<int> tuple;   // sorted representative of the symmetric array cell
    double b = 0.0;           // common value across all arrangements of the tuple
};

/// Symmetric chaos coefficient arrays, one per order p: b_{i,j} for
/// j in N^p, stored once per sorted tuple. The full-array second moment
/// identity  p! sum_{j in N^p} b^2 = E||G^p[X_1]||^2  fixes the sums.
struct ChaosCoefficients {
    int output_dim = 0;
    std::map<int, std::vector<ChaosEntry>> orders;

    static double tuple_multiplicity(const std::vector<int>& sorted_tuple) {
        double mult = factorial(static_cast<int>(sorted_tuple.size()));
        int run = 1;
        for (std::size_t k = 1; k <= sorted_tuple.size(); ++k) {
            if (k < sorted_tuple.size() && sorted_tuple[k] == sorted_tuple[k - 1]) {
                ++run;
            } else {
                mult /= factorial(run);
                run = 1;
            }
        }
        return mult;
    }

    int min_order() const {
        for (const auto& [p, entries] : orders)
            if (!entries.empty()) return p;
        throw std::runtime_error("ChaosCoefficients: empty table");
    }
    int max_order() const {
        int m = 0;
        for (const auto& [p, entries] : orders)
            if (!entries.empty()) m = p;
        return m;
    }

    /// E||G^p[X_1]||^2 = p! sum_{j in N^p} b_{i,j}^2 summed over i
    double second_moment(int p) const {
        auto it = orders.find(p);
        if (it == orders.end()) return 0.0;
        double s = 0.0;
        for (const auto& e : it->second) s += tuple_multiplicity(e.tuple) * e.b * e.b;
        return factorial(p) * s;
    }

    double total_second_moment() const {
        double s = 0.0;
        for (const auto& [p, entries] : orders) s += second_moment(p);
        return s;
    }

    /// all ordered arrangements of every stored cell (small orders only)
    std::vector<ChaosEntry> expanded(int p) const {
        std::vector<ChaosEntry> out;
        auto it = orders.find(p);
        if (it == orders.end()) return out;
        for (const auto& e : it->second) {
            std::vector<int> t = e.tuple;
            do {
                out.push_back({e.i, t, e.b});
            } while (std::next_permutation(t.begin(), t.end()));
        }
        return out;
    }
};

/// Translate a Hermite coefficient table into symmetric chaos arrays.
/// A degree-p multi-index l contributes value c * (prod l_m!) / p! to every
/// arrangement of its position tuple, which reproduces
/// p! sum_j b^2 = (prod l_m!) c^2 cell by cell.
inline ChaosCoefficients to_chaos_coefficients(const HermiteCoefficients& coeffs) {
    ChaosCoefficients chaos;
    chaos.output_dim = coeffs.output_dim;
    for (const auto& e : coeffs.entries) {
        const int p = e.l.degree();
        if (p == 0) continue;  // degree zero is the mean, not a chaos cell
        const double b = e.c * e.l.exponent_factorial() / factorial(p);
        chaos.orders[p].push_back({e.i, e.l.as_tuple(), b});
    }
    return chaos;
}

struct CoefficientEstimate {
    double value = 0.0;
    double std_error = 0.0;
    long pairs = 0;
};

/// Monte Carlo estimate of c_{i,l} = E[ <G[X], v_i> H_l(X) ] / prod l_m!
/// under gamma_Q at the truncation level, with antithetic pairing and a
/// jackknife standard error over pairs. evaluate_output maps the embedded
/// point X to the flat output coordinates of G.
inline CoefficientEstimate estimate_hermite_coefficient(
    const std::function<std::vector<double>(const HilbertVector&)>& evaluate_output,
    const std::vector<double>& spectrum, int i, const MultiIndex& l, long n_samples,
    std::uint64_t seed) {
    if (i < 1) throw std::invalid_argument("estimate_hermite_coefficient: output index is 1-based");
    const int dim = static_cast<int>(spectrum.size());
    if (l.max_pos() > dim)
        throw std::invalid_argument("estimate_hermite_coefficient: multi-index beyond truncation");
    const long pairs = std::max<long>(2, n_samples / 2);
    RngStream rng = RngStream::substream(seed, 0x60e57a11);

    std::vector<double> root(dim);
    for (int r = 0; r < dim; ++r) root[r] = std::sqrt(spectrum[r]);

    std::vector<double> w(dim);
    HilbertVector x(dim);
    std::vector<double> pair_values(pairs);
    auto one_side = [&](double sign) {
        for (int r = 0; r < dim; ++r) x[r] = sign * root[r] * w[r];
        const std::vector<double> out = evaluate_output(x);
        if (i > static_cast<int>(out.size()))
            throw std::invalid_argument("estimate_hermite_coefficient: output index out of range");
        const double y = out[i - 1];
        if (!std::isfinite(y))
            throw std::runtime_error("estimate_hermite_coefficient: non-finite G output");
        std::vector<double> signed_w(dim);
        for (int r = 0; r < dim; ++r) signed_w[r] = sign * w[r];
        return y * hermite_product_eval(l, signed_w);
    };
    for (long pair = 0; pair < pairs; ++pair) {
        for (int r = 0; r < dim; ++r) w[r] = rng.next_gaussian();
        pair_values[pair] = 0.5 * (one_side(1.0) + one_side(-1.0));
    }

    double mean = 0.0;
    for (double v : pair_values) mean += v;
    mean /= static_cast<double>(pairs);
    // delete-one jackknife of the sample mean
    double jack = 0.0;
    for (double v : pair_values) {
        const double loo = (mean * pairs - v) / static_cast<double>(pairs - 1);
        jack += (loo - mean) * (loo - mean);
    }
    const double se = std::sqrt(jack * static_cast<double>(pairs - 1) / static_cast<double>(pairs));

    const double norm = l.exponent_factorial();
    return {mean / norm, se / norm, pairs};
}

/// All multi-indices with max_pos <= index_cap and 1 <= degree <= degree_cap.
inline std::vector<MultiIndex> enumerate_multi_indices(int degree_cap, int index_cap) {
    std::vector<MultiIndex> cells;
    std::vector<std::pair<int, int>> cur;
    std::function<void(int, int)> recurse = [&](int next_pos, int remaining) {
        if (!cur.empty()) cells.emplace_back(cur);
        for (int pos = next_pos; pos <= index_cap; ++pos) {
            for (int exp = 1; exp <= remaining; ++exp) {
                cur.emplace_back(pos, exp);
                recurse(pos + 1, remaining - exp);
                cur.pop_back();
            }
        }
    };
    recurse(1, degree_cap);
    return cells;
}

/// Estimate a full coefficient table over degrees 1..degree_cap and positions
/// 1..index_cap, keeping entries with |c| above keep_threshold. One batch of
/// antithetic draws feeds every cell, so G is evaluated twice per pair, not
/// once per (cell, sample); estimates stay seed-deterministic.
inline HermiteCoefficients estimate_coefficient_table(
    const std::function<std::vector<double>(const HilbertVector&)>& evaluate_output,
    int output_dim, const std::vector<double>& spectrum, int degree_cap, int index_cap,
    long n_samples, std::uint64_t seed, double keep_threshold = 0.0) {
    const int dim = static_cast<int>(spectrum.size());
    if (index_cap <= 0 || index_cap > dim) index_cap = dim;
    const std::vector<MultiIndex> cells = enumerate_multi_indices(degree_cap, index_cap);
    const long pairs = std::max<long>(2, n_samples / 2);
    const std::size_t n_cells = cells.size();

    RngStream rng = RngStream::substream(seed, 0x7ab1e5);
    std::vector<double> root(dim);
    for (int r = 0; r < dim; ++r) root[r] = std::sqrt(spectrum[r]);

    // per (cell, output): running sum of antithetic pair values and squares
    std::vector<double> acc(n_cells * output_dim, 0.0);
    std::vector<double> acc2(n_cells * output_dim, 0.0);
    std::vector<double> w(dim), w_neg(dim);
    HilbertVector x(dim);
    std::vector<double> h_pos(n_cells), h_neg(n_cells);
    std::vector<double> pair_vals(n_cells * output_dim);
    for (long pair = 0; pair < pairs; ++pair) {
        for (int r = 0; r < dim; ++r) {
            w[r] = rng.next_gaussian();
            w_neg[r] = -w[r];
        }
        for (std::size_t c = 0; c < n_cells; ++c) {
            h_pos[c] = hermite_product_eval(cells[c], w);
            h_neg[c] = hermite_product_eval(cells[c], w_neg);
        }
        std::fill(pair_vals.begin(), pair_vals.end(), 0.0);
        for (int sign = 0; sign < 2; ++sign) {
            for (int r = 0; r < dim; ++r) x[r] = root[r] * (sign ? w_neg[r] : w[r]);
            const std::vector<double> y = evaluate_output(x);
            if (static_cast<int>(y.size()) < output_dim)
                throw std::invalid_argument("estimate_coefficient_table: output too short");
            const std::vector<double>& h = sign ? h_neg : h_pos;
            for (int i = 0; i < output_dim; ++i) {
                if (!std::isfinite(y[i]))
                    throw std::runtime_error("estimate_coefficient_table: non-finite G output");
                for (std::size_t c = 0; c < n_cells; ++c)
                    pair_vals[c * output_dim + i] += 0.5 * y[i] * h[c];
            }
        }
        for (std::size_t t = 0; t < pair_vals.size(); ++t) {
            acc[t] += pair_vals[t];
            acc2[t] += pair_vals[t] * pair_vals[t];
        }
    }

    HermiteCoefficients table;
    table.degree_cap = degree_cap;
    table.index_cap = index_cap;
    table.output_dim = output_dim;
    for (std::size_t c = 0; c < n_cells; ++c) {
        const double norm = cells[c].exponent_factorial();
        for (int i = 0; i < output_dim; ++i) {
            const double mean = acc[c * output_dim + i] / static_cast<double>(pairs);
            const double var =
                acc2[c * output_dim + i] / static_cast<double>(pairs) - mean * mean;
            const double se = std::sqrt(std::max(0.0, var) / static_cast<double>(pairs));
            const double value = mean / norm;
            if (std::abs(value) > keep_threshold)
                table.entries.push_back({i + 1, cells[c], value, se / norm});
        }
    }
    return table;
}

struct QuadratureRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

/// Gauss-Hermite rule for the standard normal weight (probabilists'):
/// Golub-Welsch on the Jacobi matrix with off-diagonals sqrt(k).
inline QuadratureRule gauss_hermite_nodes(int n) {
    if (n < 1) throw std::invalid_argument("gauss_hermite_nodes: n must be >= 1");
    HilbertOperator jacobi(n);
    for (int k = 1; k < n; ++k) {
        jacobi(k - 1, k) = std::sqrt(static_cast<double>(k));
        jacobi(k, k - 1) = jacobi(k - 1, k);
    }
    SymmetricEigen eig = symmetric_eigen(jacobi);
    QuadratureRule rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    for (int k = 0; k < n; ++k) {
        rule.nodes[k] = eig.values[n - 1 - k];  // ascending
        const double v0 = eig.vectors[n - 1 - k][0];
        rule.weights[k] = v0 * v0;  // total mass 1 for the normal density
    }
    return rule;
}

}  // namespace hsclt

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <hsclt/hermite.hpp>
#include <hsclt/linalg.hpp>
#include <hsclt/models.hpp>
#include <hsclt/operators.hpp>

namespace hsclt {

// Theoretical side of the limit theorems: the summability condition through
// theta(v) = sup_r sum_s |rho_rs(v)| and K, the limiting covariance operators
// T_Z / T_B / T_W, the quantitative bound terms R_1..R_4, contraction norms
// of the chaos kernels, and the indicator kernels f_kn.

/// theta(v) = max over r <= D of the absolute row sums of rho_.,.(v).
/// The sup is taken over the truncation level only; exact for all shipped
/// models (diagonal rho), a declared lower bound otherwise.
inline double theta(const ProcessModel& model, long v, int dim_cap = 0) {
    const int d = (dim_cap > 0 && dim_cap <= model.dim()) ? dim_cap : model.dim();
    double best = 0.0;
    for (int r = 1; r <= d; ++r) {
        double row = 0.0;
        for (int s = 1; s <= d; ++s) row += std::abs(model.rho(r, s, v));
        best = std::max(best, row);
    }
    return best;
}

/// theta(v) tabulated on |v| <= horizon, one array per sign of the lag.
struct ThetaTable {
    long horizon = 0;
    std::vector<double> pos;  // pos[v] = theta(+v), v = 0..horizon
    std::vector<double> neg;  // neg[v] = theta(-v)

    static ThetaTable build(const ProcessModel& model, long horizon, int dim_cap = 0) {
        ThetaTable t;
        t.horizon = horizon;
        t.pos.resize(horizon + 1);
        t.neg.resize(horizon + 1);
        for (long v = 0; v <= horizon; ++v) {
            t.pos[v] = theta(model, v, dim_cap);
            t.neg[v] = v == 0 ? t.pos[0] : theta(model, -v, dim_cap);
        }
        return t;
    }

    double at(long v) const {
        const long a = v < 0 ? -v : v;
        if (a > horizon) throw std::out_of_range("ThetaTable: lag beyond horizon");
        return v < 0 ? neg[a] : pos[a];
    }

    /// sum over |v| <= min(horizon, up_to) of theta(v)^e, weighted by w(|v|)
    template <class Weight>
    double weighted_sum_pow(double e, long up_to, Weight w) const {
        const long top = std::min(horizon, up_to);
        double s = (e == 0.0 ? 1.0 : std::pow(pos[0], e)) * w(0L);
        for (long v = 1; v <= top; ++v) {
            const double wp = e == 0.0 ? 1.0 : std::pow(pos[v], e);
            const double wn = e == 0.0 ? 1.0 : std::pow(neg[v], e);
            s += (wp + wn) * w(v);
        }
        return s;
    }

    double sum_pow(double e, long up_to) const {
        return weighted_sum_pow(e, up_to, [](long) { return 1.0; });
    }

    /// geometric per-lag decay ratio fitted on `window` lags ending at `end`;
    /// nullopt if the table vanishes there (finite support).
    std::optional<double> fitted_ratio_at(bool negative_side, long end, long window = 16) const {
        const auto& arr = negative_side ? neg : pos;
        if (end > horizon || end - window < 1) return std::nullopt;
        const double last = arr[end];
        const double first = arr[end - window];
        if (last <= 0.0 || first <= 0.0) return std::nullopt;
        return std::pow(last / first, 1.0 / static_cast<double>(window));
    }

    std::optional<double> fitted_ratio(bool negative_side, long window = 16) const {
        return fitted_ratio_at(negative_side, horizon, window);
    }

    /// true when the per-lag decay ratio drifts between the mid-horizon and
    /// the horizon, the signature of polynomial rather than geometric decay
    bool ratio_drifts(bool negative_side) const {
        const auto near = fitted_ratio_at(negative_side, horizon);
        const auto mid = fitted_ratio_at(negative_side, horizon / 2);
        if (!near || !mid) return false;
        if (*near >= 1.0 || *mid >= 1.0) return false;
        const double log_ratio = std::log(*near) / std::log(*mid);
        return std::abs(log_ratio - 1.0) > 0.2;
    }

    /// power-law exponent gamma fitted on theta(v) ~ v^{-gamma} over the top
    /// half of the horizon (log-log least squares), per sign.
    std::optional<double> fitted_power(bool negative_side) const {
        const auto& arr = negative_side ? neg : pos;
        const long lo = std::max<long>(2, horizon / 2);
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        long count = 0;
        for (long v = lo; v <= horizon; ++v) {
            if (arr[v] <= 0.0) return std::nullopt;
            const double x = std::log(static_cast<double>(v));
            const double y = std::log(arr[v]);
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
            ++count;
        }
        if (count < 4) return std::nullopt;
        const double denom = count * sxx - sx * sx;
        if (denom <= 0.0) return std::nullopt;
        return -(count * sxy - sx * sy) / denom;
    }

    /// Extrapolated remainder sum_{|v| > horizon} theta(v)^e under the
    /// fitted geometric decay; zero for finite-support tables; nullopt when
    /// no geometric fit holds.
    std::optional<double> geometric_tail_pow(double e) const {
        double total = 0.0;
        for (bool side : {false, true}) {
            const auto& arr = side ? neg : pos;
            if (arr[horizon] == 0.0) continue;  // finite support on this side
            const auto ratio = fitted_ratio(side);
            if (!ratio || *ratio >= 0.999) return std::nullopt;
            const double rq = std::pow(*ratio, e);
            if (rq >= 1.0) return std::nullopt;
            total += std::pow(arr[horizon], e) * rq / (1.0 - rq);
        }
        return total;
    }
};

/// K = inf{ k in N : theta(v) <= 1 for all |v| >= k }, scanned inside the
/// table's horizon. Throws if theta still exceeds 1 at the horizon.
inline long constant_K(const ThetaTable& table) {
    const double one = 1.0 + 1e-12;
    if (table.horizon > 0 && (table.pos[table.horizon] > one || table.neg[table.horizon] > one))
        throw std::runtime_error("constant_K: theta(v) > 1 at the lag horizon; K not certified");
    long last_exceed = 0;
    for (long v = 1; v <= table.horizon; ++v)
        if (table.pos[v] > one || table.neg[v] > one) last_exceed = v;
    return last_exceed + 1;
}

struct ConditionReport {
    int q = 1;
    long v_max = 0;
    int dim = 0;
    std::vector<double> theta_pos;  // theta(v) for v = 0..v_max
    std::vector<double> theta_neg;
    double partial_sum = 0.0;    // sum_{|v| <= v_max} theta(v)^q
    double tail_estimate = 0.0;  // extrapolated remainder (inf when divergent)
    double theta_sum = 0.0;      // partial + tail when finite
    long K = 1;
    double fitted_ratio = 0.0;   // geometric per-lag ratio (0 when unused)
    double fitted_power = 0.0;   // power-law exponent of theta^q (0 when unused)
    std::string verdict;         // "pass" | "fail" | "indeterminate"

    nlohmann::json to_json() const {
        return {{"q", q},
                {"v_max", v_max},
                {"dim", dim},
                {"theta_pos", theta_pos},
                {"theta_neg", theta_neg},
                {"partial_sum", partial_sum},
                {"tail_estimate", tail_estimate},
                {"theta_sum", theta_sum},
                {"K", K},
                {"fitted_ratio", fitted_ratio},
                {"fitted_power", fitted_power},
                {"verdict", verdict}};
    }
};

/// Assess sum_v theta(v)^q < infinity at the lag horizon. Verdicts:
///   pass          — finite support at the horizon, or a geometric fit with
///                   per-lag ratio < 0.999 (tail extrapolated from it)
///   fail          — the geometric fit is inconclusive and the fitted
///                   power-law decay of theta(v)^q has exponent <= 1.05
///                   (non-summable p-series behavior)
///   indeterminate — everything else
inline ConditionReport check_condition(const ProcessModel& model, int q, long v_max,
                                       int dim_cap = 0) {
    if (q < 1) throw std::invalid_argument("check_condition: q must be >= 1");
    if (v_max < 32) throw std::invalid_argument("check_condition: v_max too small to extrapolate");
    ThetaTable table = ThetaTable::build(model, v_max, dim_cap);

    ConditionReport report;
    report.q = q;
    report.v_max = v_max;
    report.dim = (dim_cap > 0 && dim_cap <= model.dim()) ? dim_cap : model.dim();
    report.theta_pos = table.pos;
    report.theta_neg = table.neg;
    report.partial_sum = table.sum_pow(q, v_max);
    report.K = constant_K(table);

    const bool finite_support = table.pos[v_max] == 0.0 && table.neg[v_max] == 0.0;
    if (finite_support) {
        report.tail_estimate = 0.0;
        report.theta_sum = report.partial_sum;
        report.verdict = "pass";
        return report;
    }

    const auto rp = table.fitted_ratio(false);
    const auto rn = table.fitted_ratio(true);
    report.fitted_ratio = std::max(rp.value_or(0.0), rn.value_or(0.0));

    // a drifting per-lag ratio marks polynomial decay; the geometric
    // extrapolation would silently certify slowly divergent tails there
    const bool polynomial_like = table.ratio_drifts(false) || table.ratio_drifts(true);
    if (!polynomial_like) {
        const auto tail = table.geometric_tail_pow(q);
        if (tail) {
            report.tail_estimate = *tail;
            report.theta_sum = report.partial_sum + *tail;
            report.verdict = "pass";
            return report;
        }
    }

    const auto gp = table.fitted_power(false);
    const auto gn = table.fitted_power(true);
    if (gp && gn) {
        const double gamma_q = q * std::min(*gp, *gn);
        report.fitted_power = gamma_q;
        if (gamma_q <= 1.05) {
            report.tail_estimate = std::numeric_limits<double>::infinity();
            report.theta_sum = std::numeric_limits<double>::infinity();
            report.verdict = "fail";
            return report;
        }
        // summable power law: report the p-series remainder but stay
        // indeterminate, since the geometric fit could not certify it
        const double edge = std::pow(std::max(table.pos[v_max], table.neg[v_max]),
                                     static_cast<double>(q));
        report.tail_estimate = 2.0 * edge * static_cast<double>(v_max) / (gamma_q - 1.0);
        report.theta_sum = report.partial_sum + report.tail_estimate;
        report.verdict = "indeterminate";
        return report;
    }

    report.tail_estimate = std::numeric_limits<double>::quiet_NaN();
    report.theta_sum = std::numeric_limits<double>::quiet_NaN();
    report.verdict = "indeterminate";
    return report;
}

struct ConditionComparison {
    double conjectured_sum = 0.0;  // sum_v (sup_{r,s} |rho_rs(v)|)^q, the weaker candidate
    double row_sum = 0.0;          // sum_v (sup_r sum_s |rho_rs(v)|)^q, the adopted condition
    double ratio = 1.0;            // row_sum / conjectured_sum, >= 1
};

/// Partial sums of the two candidate summability conditions over |v| <=
/// v_max. The row-sum form dominates the entrywise-sup form, with equality
/// for diagonal rho.
inline ConditionComparison compare_conditions(const ProcessModel& model, int q, long v_max,
                                              int dim_cap = 0) {
    if (q < 1) throw std::invalid_argument("compare_conditions: q must be >= 1");
    const int d = (dim_cap > 0 && dim_cap <= model.dim()) ? dim_cap : model.dim();
    ConditionComparison out;
    for (long v = -v_max; v <= v_max; ++v) {
        double sup_entry = 0.0;
        for (int r = 1; r <= d; ++r)
            for (int s = 1; s <= d; ++s) sup_entry = std::max(sup_entry, std::abs(model.rho(r, s, v)));
        out.conjectured_sum += std::pow(sup_entry, q);
        out.row_sum += std::pow(theta(model, v, d), q);
    }
    out.ratio = out.conjectured_sum > 0.0 ? out.row_sum / out.conjectured_sum : 1.0;
    return out;
}

/// Limiting covariance operator from the chaos side:
/// T_Z(i,j) = sum_p p! sum_{|v| <= V} sum_{r,s in N^p} b_{i,r} b_{j,s}
///            prod_m rho_{r_m s_m}(v).
inline HilbertOperator limit_covariance_chaos(const ChaosCoefficients& chaos,
                                              const ProcessModel& model, long v_max) {
    HilbertOperator t(chaos.output_dim);
    const bool diagonal = model.diagonal_rho();
    for (const auto& [p, cells] : chaos.orders) {
        if (cells.empty()) continue;
        const std::vector<ChaosEntry> expanded = chaos.expanded(p);
        const double pfact = factorial(p);
        for (long v = -v_max; v <= v_max; ++v) {
            for (const auto& e1 : expanded) {
                for (const auto& e2 : expanded) {
                    if (diagonal && e1.tuple != e2.tuple) continue;
                    double prod = 1.0;
                    for (int m = 0; m < p && prod != 0.0; ++m)
                        prod *= model.rho(e1.tuple[m], e2.tuple[m], v);
                    if (prod == 0.0) continue;
                    t(e1.i - 1, e2.i - 1) += pfact * e1.b * e2.b * prod;
                }
            }
        }
    }
    return t;
}

struct McCovariance {
    HilbertOperator estimate;
    HilbertOperator std_error;  // entrywise standard error over replications
    long lag_horizon = 0;
    long replications = 0;
    long path_length = 0;
};

/// Monte Carlo estimate of the lag-truncated series
/// T_Z ~ E Y_1 (x) Y_1 + sum_{v=1..V} (E Y_1 (x) Y_{1+v} + E Y_{1+v} (x) Y_1)
/// with Y = centered G output, time-averaged within replicated paths.
inline McCovariance limit_covariance_mc(const OperatorG& g, const ProcessModel& model, long v_max,
                                        long replications, std::uint64_t seed) {
    if (replications < 8) throw std::invalid_argument("limit_covariance_mc: too few replications");
    if (!g.mean_frozen())
        throw std::runtime_error("limit_covariance_mc: operator mean must be frozen");

    // effective horizon: first lag with negligible theta
    long v_used = 0;
    for (long v = 1; v <= v_max; ++v) {
        if (std::max(theta(model, v), theta(model, -v)) < 1e-7) break;
        v_used = v;
    }
    const long path_len = std::max<long>(64, 8 * v_used + 8);
    const int k = g.output_dim();

    HilbertOperator mean_acc(k);
    HilbertOperator sq_acc(k);
    const std::vector<double> mu = g.mean();
    for (long rep = 0; rep < replications; ++rep) {
        RngStream rng = RngStream::substream(seed, static_cast<std::uint64_t>(rep));
        ScorePath path = model.simulate_path(path_len, rng);
        std::vector<std::vector<double>> y(path_len);
        for (long t = 0; t < path_len; ++t) {
            y[t] = g.apply_raw(model.embed_row(path, t));
            for (int c = 0; c < k; ++c) y[t][c] -= mu[c];
        }
        HilbertOperator est(k);
        for (long v = 0; v <= v_used; ++v) {
            HilbertOperator lag_cov(k);
            for (long t = 0; t + v < path_len; ++t)
                for (int a = 0; a < k; ++a)
                    for (int b = 0; b < k; ++b) lag_cov(a, b) += y[t][a] * y[t + v][b];
            lag_cov *= 1.0 / static_cast<double>(path_len - v);
            if (v == 0) {
                est += lag_cov;
            } else {
                est += lag_cov;
                est += lag_cov.transpose();
            }
        }
        mean_acc += est;
        for (int a = 0; a < k; ++a)
            for (int b = 0; b < k; ++b) sq_acc(a, b) += est(a, b) * est(a, b);
    }
    mean_acc *= 1.0 / static_cast<double>(replications);
    McCovariance out;
    out.estimate = mean_acc;
    out.std_error = HilbertOperator(k);
    for (int a = 0; a < k; ++a)
        for (int b = 0; b < k; ++b) {
            const double var =
                sq_acc(a, b) / static_cast<double>(replications) - mean_acc(a, b) * mean_acc(a, b);
            out.std_error(a, b) = std::sqrt(std::max(0.0, var) / static_cast<double>(replications));
        }
    out.lag_horizon = v_used;
    out.replications = replications;
    out.path_length = path_len;
    return out;
}

/// Nystrom discretization of the Brownian covariance operator on L2([0,1]):
/// entries kappa(s_a, s_b) / m with kernel kappa(s,t) = s ^ t at midpoints.
inline HilbertOperator brownian_cov_operator(int grid_size) {
    if (grid_size < 2) throw std::invalid_argument("brownian_cov_operator: grid too small");
    HilbertOperator t(grid_size);
    for (int a = 0; a < grid_size; ++a) {
        const double s = (a + 0.5) / grid_size;
        for (int b = 0; b < grid_size; ++b) {
            const double u = (b + 0.5) / grid_size;
            t(a, b) = std::min(s, u) / grid_size;
        }
    }
    return t;
}

/// T_W = T_B (x) T_Z, kept factored.
inline TensorOperator tensor_limit_covariance(HilbertOperator t_b, HilbertOperator t_z) {
    return TensorOperator{std::move(t_b), std::move(t_z)};
}

/// c_{p,r}(l) = p^2 (l-1)! C(p-1,l-1) C(r-1,l-1) (p+r-2l)!
inline double cpr_constant(int p, int r, int l) {
    if (l < 1 || l > std::min(p, r)) throw std::invalid_argument("cpr_constant: l out of range");
    auto binom = [](int n, int k) {
        double num = 1.0;
        for (int j = 1; j <= k; ++j) num = num * (n - k + j) / j;
        return num;
    };
    return static_cast<double>(p) * p * factorial(l - 1) * binom(p - 1, l - 1) *
           binom(r - 1, l - 1) * factorial(p + r - 2 * l);
}

struct BoundEntry {
    int M = 0;
    double r1 = 0.0;
    double r2 = 0.0;
    double r3 = 0.0;
    double r4 = 0.0;
    double total = 0.0;  // 2 R1 + sqrt(R2 + R3) + R4
};

struct BoundReport {
    long n = 0;
    int q = 1;
    long K = 1;
    double theta_sum_q = 0.0;
    std::map<int, double> chaos_moments;  // E||G^p[X_1]||^2 per stored order
    double discarded_mass = 0.0;          // second-moment mass beyond stored orders
    std::vector<BoundEntry> per_m;
    double total = 0.0;  // min over M

    nlohmann::json to_json() const {
        nlohmann::json moments = nlohmann::json::object();
        for (const auto& [p, m] : chaos_moments) moments[std::to_string(p)] = m;
        nlohmann::json entries = nlohmann::json::array();
        for (const auto& e : per_m)
            entries.push_back({{"M", e.M},
                               {"R1", e.r1},
                               {"R2", e.r2},
                               {"R3", e.r3},
                               {"R4", e.r4},
                               {"total", e.total}});
        return {{"n", n},
                {"q", q},
                {"K", K},
                {"theta_sum_q", theta_sum_q},
                {"chaos_moments", std::move(moments)},
                {"discarded_mass", discarded_mass},
                {"per_M", std::move(entries)},
                {"total", total}};
    }
};

/// Evaluate the quantitative bound d_2(S_n, Z) <= inf_M { 2 R1 + sqrt(R2+R3)
/// + R4 } with
///   R1 = sqrt((2K + 2 theta) sum_{p > M} E||G^p||^2)
///   R2 = sum_{p<=M} sqrt(sum_{s<p} c_{p,p}(s)^2 A(p,p,n,s))
///   R3 = sum_{p != r <= M} sqrt(sum_{s<=p^r} c_{p,r}(s)^2 A(p,r,n,s))
///   R4 = sqrt(sum_{q<=p<=M} E||G^p||^2 (2K(K+1)/n + sum_{|v|<=n}
///            theta^q(v)|v|/n + sum_{|v|>=n} theta^q(v)))
/// Chaos moments come from the Parseval identity p! sum b^2; discarded_mass
/// is the second-moment mass of orders beyond the stored table (zero for
/// exactly finite expansions) and feeds R1.
inline BoundReport quantitative_bounds(const ChaosCoefficients& chaos, const ProcessModel& model,
                                       long n, std::vector<int> m_values, long v_max,
                                       double discarded_mass = 0.0) {
    if (n < 2 || n > (1L << 20))
        throw std::invalid_argument("quantitative_bounds: n outside the desk-scale range");
    const int q = chaos.min_order();
    const int max_order = chaos.max_order();

    ConditionReport condition = check_condition(model, q, v_max);
    if (condition.verdict == "fail")
        throw std::runtime_error("quantitative_bounds: theta sum diverges at the horizon");

    // table over max(v_max, n) so the |v| <= n partial sums are exact at
    // desk scale
    const long horizon = std::max(v_max, std::min<long>(n, 1 << 20));
    ThetaTable table = ThetaTable::build(model, horizon);
    const long K = constant_K(table);

    auto tail_pow = [&](double e) {
        const auto tail = table.geometric_tail_pow(e);
        if (!tail)
            throw std::runtime_error("quantitative_bounds: no convergent tail for theta^" +
                                     std::to_string(e));
        return *tail;
    };
    // full series sum_{v in Z} theta^e(v)
    auto series_pow = [&](double e) { return table.sum_pow(e, horizon) + tail_pow(e); };
    // partial sum over |v| <= n (exact when n <= horizon)
    auto partial_pow = [&](double e, long up_to) {
        double s = table.sum_pow(e, up_to);
        if (up_to > horizon) s += tail_pow(e);  // tiny; beyond-horizon mass
        return s;
    };

    const double theta_q_series = series_pow(q);

    BoundReport report;
    report.n = n;
    report.q = q;
    report.K = K;
    report.theta_sum_q = theta_q_series;
    report.discarded_mass = discarded_mass;
    for (const auto& [p, cells] : chaos.orders) report.chaos_moments[p] = chaos.second_moment(p);

    auto moment = [&](int p) {
        auto it = report.chaos_moments.find(p);
        return it == report.chaos_moments.end() ? 0.0 : it->second;
    };

    auto a_term = [&](int p, int r, int s) {
        const double mp = moment(p), mr = moment(r);
        if (mp == 0.0 || mr == 0.0) return 0.0;
        const double head = series_pow(p);
        const double mid = std::pow(n, -1.0 + static_cast<double>(s) / r) * partial_pow(s, n);
        const double tail = std::pow(n, -1.0 + static_cast<double>(r - s) / r) *
                            partial_pow(static_cast<double>(r - s), n);
        return mp * mr * head * mid * tail;
    };

    // R4 ingredients
    const double weighted_mid =
        table.weighted_sum_pow(q, std::min<long>(n, horizon),
                               [&](long v) { return static_cast<double>(v) / n; });
    double tail_beyond_n = 0.0;
    if (n <= horizon) {
        tail_beyond_n = table.sum_pow(q, horizon) -
                        (n >= 1 ? table.sum_pow(q, n - 1) : 0.0) + tail_pow(q);
    } else {
        tail_beyond_n = tail_pow(q);
    }
    const double r4_env = 2.0 * K * (K + 1.0) / n + weighted_mid + tail_beyond_n;

    if (m_values.empty())
        for (int m = q; m <= max_order; ++m) m_values.push_back(m);

    report.total = std::numeric_limits<double>::infinity();
    for (int M : m_values) {
        if (M < q) throw std::invalid_argument("quantitative_bounds: M < Hermite rank");
        BoundEntry e;
        e.M = M;

        double tail_moments = discarded_mass;
        for (const auto& [p, m] : report.chaos_moments)
            if (p > M) tail_moments += m;
        e.r1 = std::sqrt((2.0 * K + 2.0 * theta_q_series) * tail_moments);

        for (int p = 1; p <= M; ++p) {
            double inner = 0.0;
            for (int s = 1; s <= p - 1; ++s) {
                const double c = cpr_constant(p, p, s);
                inner += c * c * a_term(p, p, s);
            }
            e.r2 += std::sqrt(inner);
        }

        for (int p = 1; p <= M; ++p)
            for (int r = 1; r <= M; ++r) {
                if (p == r) continue;
                double inner = 0.0;
                for (int s = 1; s <= std::min(p, r); ++s) {
                    const double c = cpr_constant(p, r, s);
                    inner += c * c * a_term(p, r, s);
                }
                e.r3 += std::sqrt(inner);
            }

        double r4_sum = 0.0;
        for (const auto& [p, m] : report.chaos_moments)
            if (p >= q && p <= M) r4_sum += m;
        e.r4 = std::sqrt(r4_sum * r4_env);

        e.total = 2.0 * e.r1 + std::sqrt(e.r2 + e.r3) + e.r4;
        report.per_m.push_back(e);
        report.total = std::min(report.total, e.total);
    }
    return report;
}

namespace detail {

// dense rectangular matrix helper for the contraction sums
struct Mat {
    int rows = 0, cols = 0;
    std::vector<double> a;
    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}
    double& operator()(int r, int c) { return a[static_cast<std::size_t>(r) * cols + c]; }
    double operator()(int r, int c) const { return a[static_cast<std::size_t>(r) * cols + c]; }
};

inline Mat mat_mul_t_left(const Mat& tp, const Mat& h) {
    // (tp^T h)(e3, e2) = sum_e1 tp(e1,e3) h(e1,e2)
    Mat out(tp.cols, h.cols);
    for (int e1 = 0; e1 < tp.rows; ++e1)
        for (int e3 = 0; e3 < tp.cols; ++e3) {
            const double w = tp(e1, e3);
            if (w == 0.0) continue;
            for (int e2 = 0; e2 < h.cols; ++e2) out(e3, e2) += w * h(e1, e2);
        }
    return out;
}

inline Mat mat_mul(const Mat& x, const Mat& tr) {
    // (x tr)(e3, e4) = sum_e2 x(e3,e2) tr(e2,e4)
    Mat out(x.rows, tr.cols);
    for (int e3 = 0; e3 < x.rows; ++e3)
        for (int e2 = 0; e2 < x.cols; ++e2) {
            const double w = x(e3, e2);
            if (w == 0.0) continue;
            for (int e4 = 0; e4 < tr.cols; ++e4) out(e3, e4) += w * tr(e2, e4);
        }
    return out;
}

}  // namespace detail

/// Exact evaluation of sum_{i,j} || h~_{p,n,i} (x)_l h~_{r,n,j} ||^2 by the
/// quadruple-lag expansion, grouped by the three free lag differences
/// a = k1-k2, b = k3-k4, c = k1-k3 (the fourth, d = k2-k4, equals b+c-a):
///
///   (1/n^2) sum_{a,b,c} count(a,b,c) sum_tuples b b b b
///       prod_{m<=l} rho(a) prod_{m<=l} rho(b)
///       prod_{m>l}^p rho(c) prod_{m>l}^r rho(d),
///
/// where count(a,b,c) = #{k1 in [1,n] with all four indices in range}. For
/// n beyond the exact-enumeration window, lag ranges with negligible theta
/// mass (per-factor bound < 1e-14) are skipped.
inline double contraction_norm(const ChaosCoefficients& chaos, const ProcessModel& model, int p,
                               int r, int l, long n) {
    if (p < 1 || r < 1 || p > 3 || r > 3)
        throw std::invalid_argument("contraction_norm: orders must be in 1..3 (desk envelope)");
    if (model.dim() > 8)
        throw std::invalid_argument("contraction_norm: dimension above the desk envelope (D <= 8)");
    if (l < 1 || l > std::min(p, r)) throw std::invalid_argument("contraction_norm: l out of range");
    if (n < 2) throw std::invalid_argument("contraction_norm: n must be >= 2");

    const std::vector<ChaosEntry> ep = chaos.expanded(p);
    const std::vector<ChaosEntry> er = chaos.expanded(r);
    if (ep.empty() || er.empty()) return 0.0;
    const int np = static_cast<int>(ep.size());
    const int nr = static_cast<int>(er.size());

    const long L = n - 1;

    // lag ranges: full enumeration for small n, theta-magnitude cut beyond
    std::vector<long> head_lags, tailp_lags;
    const bool exact = n <= 64;
    auto significant = [&](int power) {
        std::vector<long> lags;
        for (long v = -L; v <= L; ++v) {
            if (exact || power == 0 ||
                std::pow(std::max(theta(model, v), 1e-300), power) > 1e-14)
                lags.push_back(v);
        }
        return lags;
    };
    head_lags = significant(l);
    tailp_lags = significant(p - l);

    // per-lag pairing matrices; b-values folded into the head matrices
    auto head_matrix = [&](long v) {
        detail::Mat m(np, nr);
        for (int i = 0; i < np; ++i)
            for (int j = 0; j < nr; ++j) {
                double prod = ep[i].b * er[j].b;
                for (int t = 0; t < l && prod != 0.0; ++t)
                    prod *= model.rho(ep[i].tuple[t], er[j].tuple[t], v);
                m(i, j) = prod;
            }
        return m;
    };
    auto tailp_matrix = [&](long v) {
        detail::Mat m(np, np);
        for (int i = 0; i < np; ++i)
            for (int j = 0; j < np; ++j) {
                if (ep[i].i != ep[j].i) continue;  // output index pairing
                double prod = 1.0;
                for (int t = l; t < p && prod != 0.0; ++t)
                    prod *= model.rho(ep[i].tuple[t], ep[j].tuple[t], v);
                m(i, j) = prod;
            }
        return m;
    };
    auto tailr_matrix = [&](long v) {
        detail::Mat m(nr, nr);
        for (int i = 0; i < nr; ++i)
            for (int j = 0; j < nr; ++j) {
                if (er[i].i != er[j].i) continue;
                double prod = 1.0;
                for (int t = l; t < r && prod != 0.0; ++t)
                    prod *= model.rho(er[i].tuple[t], er[j].tuple[t], v);
                m(i, j) = prod;
            }
        return m;
    };

    std::map<long, detail::Mat> heads, tailps, tailrs;
    for (long v : head_lags) heads.emplace(v, head_matrix(v));
    for (long v : tailp_lags) tailps.emplace(v, tailp_matrix(v));

    double total = 0.0;
    for (long a : head_lags) {
        const detail::Mat& ha = heads.at(a);
        for (long c : tailp_lags) {
            const detail::Mat x = detail::mat_mul_t_left(tailps.at(c), ha);  // (e3, e2)
            for (long b : head_lags) {
                const long d = b + c - a;
                if (d < -L || d > L) continue;
                const long spread = std::max({0L, a, c, c + b}) - std::min({0L, a, c, c + b});
                if (spread >= n) continue;
                const long count = n - spread;
                auto it = tailrs.find(d);
                if (it == tailrs.end()) it = tailrs.emplace(d, tailr_matrix(d)).first;
                const detail::Mat& hb = heads.at(b);
                const detail::Mat y = detail::mat_mul(x, it->second);  // (e3, e4)
                double t_abc = 0.0;
                for (int e3 = 0; e3 < np; ++e3)
                    for (int e4 = 0; e4 < nr; ++e4) t_abc += hb(e3, e4) * y(e3, e4);
                total += static_cast<double>(count) * t_abc;
            }
        }
    }
    return total / (static_cast<double>(n) * static_cast<double>(n));
}

/// Indicator kernels f_{kn}(s,t) of the continuous-time proof:
///   f_{0n} = floor(n (s^t))/n - (s^t)
///   and for |k| = 1..n-1 the two branches split strictly at t - s > k/n.
/// They obey |f_{0n}| <= 1/n and |f_{kn}| <= 3|k|/n on [0,1]^2.
inline double f_kn(long k, long n, double s, double t) {
    if (n < 1) throw std::invalid_argument("f_kn: n must be >= 1");
    if (k <= -n || k >= n) throw std::out_of_range("f_kn: need |k| <= n-1");
    if (s < 0.0 || s > 1.0 || t < 0.0 || t > 1.0)
        throw std::invalid_argument("f_kn: s,t must lie in [0,1]");
    const double st = std::min(s, t);
    const double nd = static_cast<double>(n);
    if (k == 0) return std::floor(nd * st) / nd - st;
    const double ak = static_cast<double>(k < 0 ? -k : k);
    if (t - s > static_cast<double>(k) / nd) {
        return std::floor(nd * s) / nd - st + st * ak / nd + (k < 0 ? static_cast<double>(k) / nd : 0.0);
    }
    return std::floor(nd * t) / nd - st + st * ak / nd - (k > 0 ? static_cast<double>(k) / nd : 0.0);
}

}  // namespace hsclt

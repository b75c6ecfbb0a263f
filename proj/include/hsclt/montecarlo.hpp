// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <hsclt/limit_theory.hpp>
#include <hsclt/linalg.hpp>
#include <hsclt/models.hpp>
#include <hsclt/operators.hpp>
#include <hsclt/rng.hpp>

namespace hsclt {

// Replicated simulation experiments behind the empirical side of the limit
// theorems: covariance-operator convergence of S_n, normality of its
// projections, and the s ^ t covariance structure of V_n. Replications run
// on a pool of workers in fixed-size chunks so results are bit-identical
// for a given (config, seed) regardless of the thread count.

struct NormalityStats {
    double ks_stat = 0.0;
    double ad_stat = 0.0;
    double excess_kurtosis = 0.0;
    double ks_critical_1pct = 0.0;  // asymptotic 1% Kolmogorov critical value
    bool ks_pass_1pct = false;
};

/// One-sample diagnostics of `samples` against N(0, sigma2): Kolmogorov-
/// Smirnov and Anderson-Darling statistics plus the excess kurtosis.
inline NormalityStats normality_diagnostics(std::vector<double> samples, double sigma2) {
    if (samples.size() < 100)
        throw std::invalid_argument("normality_diagnostics: need at least 100 samples");
    if (!(sigma2 > 0.0)) throw std::invalid_argument("normality_diagnostics: degenerate sigma2");
    const double sigma = std::sqrt(sigma2);
    std::sort(samples.begin(), samples.end());
    const std::size_t n = samples.size();

    auto cdf = [&](double x) { return 0.5 * std::erfc(-x / (sigma * std::sqrt(2.0))); };

    NormalityStats out;
    double ad = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double f = cdf(samples[i]);
        out.ks_stat = std::max(out.ks_stat, (i + 1.0) / n - f);
        out.ks_stat = std::max(out.ks_stat, f - static_cast<double>(i) / n);
        const double lo = std::clamp(f, 1e-300, 1.0 - 1e-16);
        const double hi = std::clamp(cdf(samples[n - 1 - i]), 1e-300, 1.0 - 1e-16);
        ad += (2.0 * i + 1.0) * (std::log(lo) + std::log1p(-hi));
    }
    out.ad_stat = -static_cast<double>(n) - ad / static_cast<double>(n);

    double mean = 0.0;
    for (double v : samples) mean += v;
    mean /= static_cast<double>(n);
    double m2 = 0.0, m4 = 0.0;
    for (double v : samples) {
        const double d = v - mean;
        m2 += d * d;
        m4 += d * d * d * d;
    }
    m2 /= static_cast<double>(n);
    m4 /= static_cast<double>(n);
    out.excess_kurtosis = m2 > 0.0 ? m4 / (m2 * m2) - 3.0 : 0.0;

    out.ks_critical_1pct = 1.63 / std::sqrt(static_cast<double>(n));
    out.ks_pass_1pct = out.ks_stat < out.ks_critical_1pct;
    return out;
}

/// Sampler for N(0, T) on the flat output space, by eigendecomposition of T
/// (negative eigenvalues from roundoff are clipped to zero).
class GaussianSampler {
  public:
    explicit GaussianSampler(const HilbertOperator& covariance)
        : dim_(covariance.dim()), eig_(symmetric_eigen(covariance)) {
        for (double& v : eig_.values) v = v > 0.0 ? std::sqrt(v) : 0.0;
    }

    std::vector<double> draw(RngStream& rng) const {
        std::vector<double> z(dim_, 0.0);
        for (int k = 0; k < dim_; ++k) {
            if (eig_.values[k] == 0.0) continue;
            const double xi = eig_.values[k] * rng.next_gaussian();
            for (int c = 0; c < dim_; ++c) z[c] += xi * eig_.vectors[k][c];
        }
        return z;
    }

  private:
    int dim_;
    SymmetricEigen eig_;
};

struct ExperimentConfig {
    ProcessModel model;
    OperatorG g;
    std::vector<long> n_values;
    int replications = 1000;
    std::uint64_t seed = 1;
    std::vector<double> grid;        // continuous experiments
    HilbertOperator target_tz;       // theoretical limit covariance on the output space
    int threads = 0;                 // 0 = hardware concurrency
    bool export_raw = false;
    double budget_seconds = 600.0;   // wall-clock cap; exceeding flags the report partial
};

struct ProjectionStat {
    std::string label;
    std::vector<double> direction;
    double sigma2_theory = 0.0;
    double sample_mean = 0.0;
    double sample_var = 0.0;
    NormalityStats normality;
};

struct CltPerN {
    long n = 0;
    HilbertOperator empirical_cov;
    double hs_distance_to_tz = 0.0;
    std::vector<ProjectionStat> projections;
    // continuous experiments: per direction, grid x grid matrices
    std::vector<HilbertOperator> continuous_cov;
    std::vector<HilbertOperator> continuous_cov_error;
    std::vector<std::vector<double>> raw_projections;  // [replication][direction], on request
};

struct CltReport {
    std::vector<long> n_values;
    int replications = 0;
    std::uint64_t seed = 0;
    std::vector<double> grid;
    double target_tz_hs_norm = 0.0;
    bool complete = true;
    std::vector<CltPerN> per_n;
    double runtime_seconds = 0.0;  // kept out of to_json: reports must be byte-reproducible

    nlohmann::json to_json() const {
        nlohmann::json per = nlohmann::json::array();
        for (const auto& e : per_n) {
            nlohmann::json projections = nlohmann::json::array();
            for (const auto& p : e.projections)
                projections.push_back({{"label", p.label},
                                       {"sigma2_theory", p.sigma2_theory},
                                       {"sample_mean", p.sample_mean},
                                       {"sample_var", p.sample_var},
                                       {"ks_stat", p.normality.ks_stat},
                                       {"ks_critical_1pct", p.normality.ks_critical_1pct},
                                       {"ks_pass_1pct", p.normality.ks_pass_1pct},
                                       {"ad_stat", p.normality.ad_stat},
                                       {"excess_kurtosis", p.normality.excess_kurtosis}});
            nlohmann::json item = {{"n", e.n},
                                   {"empirical_cov", hsclt::to_json(e.empirical_cov)},
                                   {"hs_distance_to_TZ", e.hs_distance_to_tz},
                                   {"projections", std::move(projections)}};
            if (!e.continuous_cov.empty()) {
                nlohmann::json covs = nlohmann::json::array();
                nlohmann::json errs = nlohmann::json::array();
                for (std::size_t d = 0; d < e.continuous_cov.size(); ++d) {
                    covs.push_back(hsclt::to_json(e.continuous_cov[d]));
                    errs.push_back(hsclt::to_json(e.continuous_cov_error[d]));
                }
                item["continuous_cov"] = std::move(covs);
                item["continuous_cov_error"] = std::move(errs);
            }
            per.push_back(std::move(item));
        }
        return {{"n_values", n_values},
                {"replications", replications},
                {"seed", seed},
                {"grid", grid},
                {"target_tz_hs_norm", target_tz_hs_norm},
                {"complete", complete},
                {"per_n", std::move(per)}};
    }
};

namespace detail {

/// Run fn(chunk_index, rep_begin, rep_end) over replication chunks of fixed
/// width on `threads` workers. Chunk layout is independent of the thread
/// count, so any per-chunk accumulators merge deterministically.
template <class Fn>
inline void parallel_chunks(long replications, int threads, Fn&& fn, long chunk = 64) {
    const long n_chunks = (replications + chunk - 1) / chunk;
    if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());
    threads = std::max(1, std::min<int>(threads, static_cast<int>(n_chunks)));
    std::atomic<long> next{0};
    auto worker = [&]() {
        for (;;) {
            const long c = next.fetch_add(1);
            if (c >= n_chunks) return;
            fn(c, c * chunk, std::min(replications, (c + 1) * chunk));
        }
    };
    if (threads == 1) {
        worker();
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
}

inline std::vector<std::vector<double>> projection_directions(int out_dim, std::uint64_t seed) {
    std::vector<std::vector<double>> dirs;
    const int basis = std::min(out_dim, 5);
    for (int d = 0; d < basis; ++d) {
        std::vector<double> e(out_dim, 0.0);
        e[d] = 1.0;
        dirs.push_back(std::move(e));
    }
    if (out_dim > 1) {
        RngStream rng = RngStream::substream(seed, 0xd17ec7);
        std::vector<double> e(out_dim);
        double norm = 0.0;
        for (double& v : e) {
            v = rng.next_gaussian();
            norm += v * v;
        }
        norm = std::sqrt(norm);
        for (double& v : e) v /= norm;
        dirs.push_back(std::move(e));
    }
    return dirs;
}

inline double quadratic_form(const HilbertOperator& t, const std::vector<double>& e) {
    double s = 0.0;
    for (int a = 0; a < t.dim(); ++a)
        for (int b = 0; b < t.dim(); ++b) s += e[a] * t(a, b) * e[b];
    return s;
}

}  // namespace detail

/// R independent replications of S_n per n: empirical covariance operator,
/// HS distance to the configured T_Z, and normality diagnostics of the
/// standardized projections onto the first basis directions plus one random
/// unit vector.
inline CltReport run_clt_experiment(const ExperimentConfig& config) {
    if (config.replications < 100)
        throw std::invalid_argument("run_clt_experiment: need at least 100 replications");
    if (config.n_values.empty())
        throw std::invalid_argument("run_clt_experiment: empty n_values");
    if (!config.g.mean_frozen())
        throw std::runtime_error("run_clt_experiment: operator mean must be frozen");
    if (config.target_tz.dim() != config.g.output_dim())
        throw std::invalid_argument("run_clt_experiment: target T_Z has the wrong dimension");

    const auto start = std::chrono::steady_clock::now();
    const int k = config.g.output_dim();
    const long reps = config.replications;
    const auto directions = detail::projection_directions(k, config.seed);

    CltReport report;
    report.n_values = config.n_values;
    report.replications = config.replications;
    report.seed = config.seed;
    report.grid = config.grid;
    report.target_tz_hs_norm = hs_norm(config.target_tz);

    for (std::size_t ni = 0; ni < config.n_values.size(); ++ni) {
        const long n = config.n_values[ni];
        if (n < 1) throw std::invalid_argument("run_clt_experiment: n must be >= 1");

        const long n_chunks = (reps + 63) / 64;
        std::vector<std::vector<double>> chunk_sum(n_chunks, std::vector<double>(k, 0.0));
        std::vector<HilbertOperator> chunk_outer(n_chunks, HilbertOperator(k));
        std::vector<std::vector<double>> proj(reps, std::vector<double>(directions.size(), 0.0));

        const std::vector<double> mu = config.g.mean();
        detail::parallel_chunks(reps, config.threads, [&](long c, long begin, long end) {
            std::vector<double> acc(k, 0.0);
            for (long rep = begin; rep < end; ++rep) {
                RngStream rng = RngStream::substream(
                    config.seed, (static_cast<std::uint64_t>(ni) << 40) | static_cast<std::uint64_t>(rep));
                ScorePath path = config.model.simulate_path(n, rng);
                std::fill(acc.begin(), acc.end(), 0.0);
                for (long t = 0; t < n; ++t) {
                    const std::vector<double> y = config.g.apply_raw(config.model.embed_row(path, t));
                    for (int c2 = 0; c2 < k; ++c2) acc[c2] += y[c2] - mu[c2];
                }
                const double scale = 1.0 / std::sqrt(static_cast<double>(n));
                for (int c2 = 0; c2 < k; ++c2) acc[c2] *= scale;
                for (int a = 0; a < k; ++a) {
                    chunk_sum[c][a] += acc[a];
                    for (int b = 0; b < k; ++b) chunk_outer[c](a, b) += acc[a] * acc[b];
                }
                for (std::size_t d = 0; d < directions.size(); ++d) {
                    double p = 0.0;
                    for (int a = 0; a < k; ++a) p += acc[a] * directions[d][a];
                    proj[rep][d] = p;
                }
            }
        });

        std::vector<double> mean(k, 0.0);
        HilbertOperator outer(k);
        for (long c = 0; c < n_chunks; ++c) {
            for (int a = 0; a < k; ++a) mean[a] += chunk_sum[c][a];
            outer += chunk_outer[c];
        }
        for (double& v : mean) v /= static_cast<double>(reps);

        CltPerN per;
        per.n = n;
        per.empirical_cov = HilbertOperator(k);
        for (int a = 0; a < k; ++a)
            for (int b = 0; b < k; ++b)
                per.empirical_cov(a, b) =
                    (outer(a, b) - reps * mean[a] * mean[b]) / static_cast<double>(reps - 1);
        per.hs_distance_to_tz = hs_distance(per.empirical_cov, config.target_tz);

        for (std::size_t d = 0; d < directions.size(); ++d) {
            ProjectionStat stat;
            stat.label = d < static_cast<std::size_t>(std::min(k, 5)) ? "e" + std::to_string(d + 1)
                                                                      : "random";
            stat.direction = directions[d];
            stat.sigma2_theory = detail::quadratic_form(config.target_tz, directions[d]);
            std::vector<double> samples(reps);
            double m1 = 0.0;
            for (long rep = 0; rep < reps; ++rep) {
                samples[rep] = proj[rep][d];
                m1 += samples[rep];
            }
            m1 /= static_cast<double>(reps);
            double m2 = 0.0;
            for (double v : samples) m2 += (v - m1) * (v - m1);
            stat.sample_mean = m1;
            stat.sample_var = m2 / static_cast<double>(reps - 1);
            if (stat.sigma2_theory > 0.0)
                stat.normality = normality_diagnostics(samples, stat.sigma2_theory);
            per.projections.push_back(std::move(stat));
        }
        if (config.export_raw) per.raw_projections = proj;
        report.per_n.push_back(std::move(per));

        const double elapsed =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (elapsed > config.budget_seconds &&
            ni + 1 < config.n_values.size()) {
            report.complete = false;
            break;
        }
    }
    report.runtime_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

/// Continuous-time experiment: empirical Cov(<V_n(s), e_d>, <V_n(t), e_d>)
/// over the grid, compared against the tensor structure (s ^ t) (T_Z)_dd.
inline CltReport run_continuous_experiment(const ExperimentConfig& config) {
    if (config.grid.empty())
        throw std::invalid_argument("run_continuous_experiment: empty time grid");
    for (std::size_t i = 0; i < config.grid.size(); ++i) {
        if (config.grid[i] < 0.0 || config.grid[i] > 1.0)
            throw std::invalid_argument("run_continuous_experiment: grid outside [0,1]");
        if (i > 0 && config.grid[i] <= config.grid[i - 1])
            throw std::invalid_argument("run_continuous_experiment: grid must increase");
    }
    if (config.replications < 100)
        throw std::invalid_argument("run_continuous_experiment: need at least 100 replications");
    if (!config.g.mean_frozen())
        throw std::runtime_error("run_continuous_experiment: operator mean must be frozen");

    const auto start = std::chrono::steady_clock::now();
    const int k = config.g.output_dim();
    const long reps = config.replications;
    const auto directions = detail::projection_directions(k, config.seed);
    const int n_dirs = static_cast<int>(directions.size());
    const int n_grid = static_cast<int>(config.grid.size());

    CltReport report;
    report.n_values = config.n_values;
    report.replications = config.replications;
    report.seed = config.seed;
    report.grid = config.grid;
    report.target_tz_hs_norm = hs_norm(config.target_tz);

    for (std::size_t ni = 0; ni < config.n_values.size(); ++ni) {
        const long n = config.n_values[ni];
        std::vector<long> cuts(n_grid);
        for (int gi = 0; gi < n_grid; ++gi)
            cuts[gi] = std::min<long>(
                n, static_cast<long>(std::floor(static_cast<double>(n) * config.grid[gi])));

        // per replication and direction, V_n at every grid time
        std::vector<std::vector<double>> values(
            reps, std::vector<double>(static_cast<std::size_t>(n_dirs) * n_grid, 0.0));

        const std::vector<double> mu = config.g.mean();
        detail::parallel_chunks(reps, config.threads, [&](long, long begin, long end) {
            std::vector<double> acc(k, 0.0);
            for (long rep = begin; rep < end; ++rep) {
                RngStream rng = RngStream::substream(
                    config.seed, (static_cast<std::uint64_t>(ni) << 40) | static_cast<std::uint64_t>(rep));
                ScorePath path = config.model.simulate_path(n, rng);
                std::fill(acc.begin(), acc.end(), 0.0);
                const double scale = 1.0 / std::sqrt(static_cast<double>(n));
                int next_cut = 0;
                for (long t = 0; t <= n; ++t) {
                    while (next_cut < n_grid && cuts[next_cut] == t) {
                        for (int d = 0; d < n_dirs; ++d) {
                            double p = 0.0;
                            for (int a = 0; a < k; ++a) p += acc[a] * directions[d][a];
                            values[rep][d * n_grid + next_cut] = p * scale;
                        }
                        ++next_cut;
                    }
                    if (t == n) break;
                    const std::vector<double> y = config.g.apply_raw(config.model.embed_row(path, t));
                    for (int c2 = 0; c2 < k; ++c2) acc[c2] += y[c2] - mu[c2];
                }
            }
        });

        CltPerN per;
        per.n = n;
        per.empirical_cov = HilbertOperator(k);
        for (int d = 0; d < n_dirs; ++d) {
            HilbertOperator cov(n_grid), err(n_grid);
            std::vector<double> mean(n_grid, 0.0);
            for (long rep = 0; rep < reps; ++rep)
                for (int gi = 0; gi < n_grid; ++gi) mean[gi] += values[rep][d * n_grid + gi];
            for (double& v : mean) v /= static_cast<double>(reps);
            for (long rep = 0; rep < reps; ++rep)
                for (int a = 0; a < n_grid; ++a)
                    for (int b = 0; b < n_grid; ++b)
                        cov(a, b) += (values[rep][d * n_grid + a] - mean[a]) *
                                     (values[rep][d * n_grid + b] - mean[b]);
            cov *= 1.0 / static_cast<double>(reps - 1);
            const double sigma2 = detail::quadratic_form(config.target_tz, directions[d]);
            for (int a = 0; a < n_grid; ++a)
                for (int b = 0; b < n_grid; ++b)
                    err(a, b) = std::abs(cov(a, b) -
                                         std::min(config.grid[a], config.grid[b]) * sigma2);
            per.continuous_cov.push_back(std::move(cov));
            per.continuous_cov_error.push_back(std::move(err));
        }
        if (config.export_raw) per.raw_projections = values;
        report.per_n.push_back(std::move(per));

        const double elapsed =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (elapsed > config.budget_seconds && ni + 1 < config.n_values.size()) {
            report.complete = false;
            break;
        }
    }
    report.runtime_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

}  // namespace hsclt

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <hsclt/config.hpp>
#include <hsclt/limit_theory.hpp>
#include <hsclt/montecarlo.hpp>

namespace hsclt {

// The operational surface: check | rank | clt | continuous | bounds | oracle.
// Exit codes partition failure classes:
//   0 success / condition pass      1 malformed spec or usage
//   2 condition failed              3 condition indeterminate
//   4 wall-clock budget exceeded
// Every run writes into <out>/<command>/<stamp>-<seed>/ and repoints the
// `latest` file; report.json bytes depend only on (spec, seed).

namespace cli_detail {

struct Invocation {
    std::string spec_path;
    std::optional<std::uint64_t> seed;
    int threads = 0;
    bool force = false;
    std::string out_dir;
    double budget_seconds = 600.0;
};

inline std::string resolve_out_root(const Invocation& inv, const ExperimentSpec& spec) {
    if (!inv.out_dir.empty()) return inv.out_dir;
    if (!spec.out_dir.empty()) return spec.out_dir;
    if (const char* env = std::getenv("HCLT_OUT"); env && *env) return env;
    return "out";
}

/// <root>/<command>/<UTC stamp>-<seed>[-k]/ plus the `latest` pointer file.
inline std::filesystem::path make_run_dir(const std::string& root, const std::string& command,
                                          std::uint64_t seed) {
    const auto now = std::chrono::system_clock::now();
    const std::time_t tt = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&tt, &tm);
    char stamp[32];
    std::strftime(stamp, sizeof(stamp), "%Y%m%dT%H%M%S", &tm);

    const std::filesystem::path base = std::filesystem::path(root) / command;
    std::filesystem::create_directories(base);
    std::string name = std::string(stamp) + "-" + std::to_string(seed);
    std::filesystem::path dir = base / name;
    for (int k = 2; std::filesystem::exists(dir); ++k)
        dir = base / (name + "-" + std::to_string(k));
    std::filesystem::create_directories(dir);

    std::ofstream latest(base / "latest");
    latest << dir.filename().string() << "\n";
    return dir;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

inline void write_report(const std::filesystem::path& dir, const std::string& name,
                         const std::string& command, const ExperimentSpec& spec,
                         nlohmann::json body) {
    nlohmann::json doc{{"schema_version", kSchemaVersion},
                       {"command", command},
                       {"spec", spec.resolved},
                       {"report", std::move(body)}};
    write_text(dir / name, doc.dump(2) + "\n");
}

inline void write_timing(const std::filesystem::path& dir, double seconds) {
    // wall-clock time lives in a sidecar so report.json stays byte-reproducible
    nlohmann::json doc{{"runtime_seconds", seconds}};
    write_text(dir / "timing.json", doc.dump(2) + "\n");
}

inline ExperimentSpec load_spec(const Invocation& inv) {
    ExperimentSpec spec = parse_spec_file(inv.spec_path);
    if (inv.seed) {
        spec.seed = *inv.seed;
        if (spec.resolved.contains("experiment")) spec.resolved["experiment"]["seed"] = spec.seed;
    }
    return spec;
}

inline void freeze_if_neural(OperatorG& g, const ExperimentSpec& spec) {
    if (g.kind() == GKind::NeuralOperator && !g.mean_frozen()) {
        const double se = g.freeze_mean(spec.mean_draws, spec.seed ^ 0xfeed);
        std::cerr << "hsclt: neural operator mean frozen over " << spec.mean_draws
                  << " draws (max entry stderr " << se << ")\n";
    }
}

/// Theoretical T_Z target: chaos series for closed forms, lag-truncated MC
/// for the neural operator.
inline HilbertOperator resolve_target_tz(const ExperimentSpec& spec, OperatorG& g) {
    if (auto chaos = closed_form_chaos(g))
        return limit_covariance_chaos(*chaos, spec.require_model(), spec.v_max);
    freeze_if_neural(g, spec);
    McCovariance mc =
        limit_covariance_mc(g, spec.require_model(), spec.v_max, 2000, spec.seed ^ 0x7a67);
    std::cerr << "hsclt: T_Z target estimated by Monte Carlo (neural operator)\n";
    return mc.estimate;
}

inline int condition_exit_code(const std::string& verdict) {
    if (verdict == "pass") return 0;
    if (verdict == "fail") return 2;
    return 3;
}

inline int cmd_check(const Invocation& inv) {
    const ExperimentSpec spec = load_spec(inv);
    const int q = resolve_q(spec);
    const ConditionReport report = check_condition(spec.require_model(), q, spec.v_max);

    const auto dir = make_run_dir(resolve_out_root(inv, spec), "check", spec.seed);
    write_report(dir, "condition.json", "check", spec, report.to_json());
    std::cout << "condition: verdict=" << report.verdict << " q=" << q
              << " theta_sum=" << report.theta_sum << " K=" << report.K << "\n";
    std::cout << "wrote " << (dir / "condition.json").string() << "\n";
    return condition_exit_code(report.verdict);
}

inline int cmd_rank(const Invocation& inv) {
    const ExperimentSpec spec = load_spec(inv);
    spec.require_operator();
    RankReport report;
    try {
        report = resolve_rank(spec);
    } catch (const std::runtime_error& err) {
        std::cerr << "hsclt: rank estimation failed: " << err.what() << "\n";
        return 1;
    }
    const auto dir = make_run_dir(resolve_out_root(inv, spec), "rank", spec.seed);
    write_report(dir, "rank.json", "rank", spec,
                 nlohmann::json{{"rank", report.rank},
                                {"threshold", report.threshold},
                                {"margin", report.margin},
                                {"method", report.method},
                                {"parseval_defect", report.parseval_defect}});
    std::cout << "rank: " << report.rank << " margin=" << report.margin
              << " method=" << report.method << "\n";
    std::cout << "wrote " << (dir / "rank.json").string() << "\n";
    return 0;
}

inline void export_raw_csv(const std::filesystem::path& dir, const CltReport& report) {
    std::ofstream out(dir / "raw.csv", std::ios::binary);
    if (report.per_n.empty() || report.per_n.front().raw_projections.empty()) return;
    const std::size_t k = report.per_n.front().raw_projections.front().size();
    out << "replication,n";
    for (std::size_t d = 1; d <= k; ++d) out << ",proj_" << d;
    out << "\r\n";
    char buf[32];
    for (const auto& per : report.per_n) {
        for (std::size_t rep = 0; rep < per.raw_projections.size(); ++rep) {
            out << rep << "," << per.n;
            for (double v : per.raw_projections[rep]) {
                std::snprintf(buf, sizeof(buf), "%.17g", v);
                out << "," << buf;
            }
            out << "\r\n";
        }
    }
}

inline int run_experiment_command(const Invocation& inv, bool continuous) {
    ExperimentSpec spec = load_spec(inv);
    const ProcessModel& model = spec.require_model();
    OperatorG g = spec.require_operator();
    if (spec.n_values.empty()) throw SpecError("spec: [experiment] block with n_values required");

    const int q = resolve_q(spec);
    const ConditionReport condition = check_condition(model, q, spec.v_max);
    if (condition.verdict != "pass" && !inv.force) {
        std::cerr << "hsclt: condition verdict '" << condition.verdict
                  << "'; rerun with --force to override\n";
        return 2;
    }

    freeze_if_neural(g, spec);
    ExperimentConfig config{model, g, spec.n_values, spec.replications, spec.seed};
    config.grid = spec.grid;
    config.threads = inv.threads;
    config.export_raw = spec.want_csv;
    config.budget_seconds = inv.budget_seconds;
    config.target_tz = resolve_target_tz(spec, g);
    config.g = g;  // target resolution may have frozen the mean

    const std::string command = continuous ? "continuous" : "clt";
    const CltReport report =
        continuous ? run_continuous_experiment(config) : run_clt_experiment(config);

    nlohmann::json body = report.to_json();
    body["condition"] = condition.to_json();
    body["target_tz"] = to_json(config.target_tz);

    const auto dir = make_run_dir(resolve_out_root(inv, spec), command, spec.seed);
    write_report(dir, "report.json", command, spec, std::move(body));
    write_timing(dir, report.runtime_seconds);
    if (spec.want_csv) export_raw_csv(dir, report);

    for (const auto& per : report.per_n) {
        std::cout << command << ": n=" << per.n;
        if (!continuous) std::cout << " hs_distance_to_TZ=" << per.hs_distance_to_tz;
        if (!per.projections.empty())
            std::cout << " proj1_var=" << per.projections.front().sample_var
                      << " ks=" << per.projections.front().normality.ks_stat;
        std::cout << "\n";
    }
    std::cout << "wrote " << (dir / "report.json").string() << "\n";
    if (!report.complete) {
        std::cerr << "hsclt: wall-clock budget exceeded; report flagged complete=false\n";
        return 4;
    }
    return 0;
}

inline int cmd_bounds(const Invocation& inv) {
    const ExperimentSpec spec = load_spec(inv);
    const ProcessModel& model = spec.require_model();
    OperatorG g = spec.require_operator();
    auto chaos = closed_form_chaos(g);
    if (!chaos)
        throw SpecError(
            "bounds: quantitative bounds need an exact chaos expansion "
            "(identity | covariance | eigenvalue operators)");
    if (spec.n_values.empty()) throw SpecError("spec: [experiment] block with n_values required");

    nlohmann::json all = nlohmann::json::array();
    for (long n : spec.n_values) {
        BoundReport report;
        try {
            report = quantitative_bounds(*chaos, model, n, spec.m_values, spec.v_max);
        } catch (const std::runtime_error& err) {
            std::cerr << "hsclt: " << err.what() << "\n";
            return 2;
        }
        std::cout << "bounds: n=" << n << " total=" << report.total << "\n";
        all.push_back(report.to_json());
    }
    const auto dir = make_run_dir(resolve_out_root(inv, spec), "bounds", spec.seed);
    write_report(dir, "report.json", "bounds", spec, nlohmann::json{{"per_n", std::move(all)}});
    std::cout << "wrote " << (dir / "report.json").string() << "\n";
    return 0;
}

/// Brute-force reference suite: recomputes key quantities along independent
/// routes and writes the values for audit.
inline int cmd_oracle(const Invocation& inv) {
    nlohmann::json out;
    bool ok = true;

    {  // Karhunen-Loeve spectrum of s ^ t vs the 512-point discretized kernel
        const int m = 512;
        HilbertOperator kernel(m);
        for (int a = 0; a < m; ++a)
            for (int b = 0; b < m; ++b)
                kernel(a, b) = std::min((a + 0.5) / m, (b + 0.5) / m) / m;
        SymmetricEigen eig = symmetric_eigen(kernel, false);
        const auto closed = brownian_increment_spectrum(3);
        nlohmann::json item;
        item["discretized"] = {eig.values[0], eig.values[1], eig.values[2]};
        item["closed_form"] = closed;
        double worst = 0.0;
        for (int j = 0; j < 3; ++j)
            worst = std::max(worst, std::abs(eig.values[j] - closed[j]) / closed[j]);
        item["max_rel_error"] = worst;
        ok = ok && worst < 1e-3;
        out["brownian_kl_spectrum"] = std::move(item);
    }

    {  // double integral of (s ^ t)^2 vs the HS norm of the Nystrom operator
        const int grid = 1024;
        double integral = 0.0;
        for (int a = 0; a < grid; ++a)
            for (int b = 0; b < grid; ++b) {
                const double s = (a + 0.5) / grid, t = (b + 0.5) / grid;
                integral += std::min(s, t) * std::min(s, t);
            }
        integral /= static_cast<double>(grid) * grid;
        const double hs = hs_norm(brownian_cov_operator(512));
        out["brownian_hs_norm"] = {{"double_integral_sqrt", std::sqrt(integral)},
                                   {"nystrom_hs_norm", hs},
                                   {"exact", 1.0 / std::sqrt(6.0)}};
        ok = ok && std::abs(hs - 1.0 / std::sqrt(6.0)) < 1e-3;
    }

    {  // Wick fourth-moment T_Z for the iid sample covariance, D = 3
        std::vector<double> lam{1.0, 0.5, 0.25};
        auto model = ProcessModel::iid(lam);
        auto chaos =
            to_chaos_coefficients(closed_form_coefficients(ClosedFormKind::Covariance, lam));
        HilbertOperator t = limit_covariance_chaos(chaos, model, 8);
        double worst = 0.0;
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b)
                for (int c = 0; c < 3; ++c)
                    for (int d = 0; d < 3; ++d) {
                        const double wick = lam[a] * lam[b] *
                                            ((a == c && b == d ? 1.0 : 0.0) +
                                             (a == d && b == c ? 1.0 : 0.0));
                        worst = std::max(worst, std::abs(t(a * 3 + b, c * 3 + d) - wick));
                    }
        out["wick_covariance_tz"] = {{"max_abs_error", worst}};
        ok = ok && worst < 1e-10;
    }

    {  // Hermite recurrence vs the derivative-polynomial route
        std::vector<double> p{1.0};
        const int order = 9;
        for (int step = 0; step < order; ++step) {
            std::vector<double> next(p.size() + 1, 0.0);
            for (std::size_t k = 1; k < p.size(); ++k) next[k - 1] += k * p[k];
            for (std::size_t k = 0; k < p.size(); ++k) next[k + 1] -= p[k];
            p = std::move(next);
        }
        const double x = 1.7;
        double value = 0.0;
        for (std::size_t k = p.size(); k-- > 0;) value = value * x + p[k];
        if (order % 2 != 0) value = -value;
        const double rec = hermite_eval(order, x);
        out["hermite_h9"] = {{"recurrence", rec}, {"derivative_route", value}};
        ok = ok && std::abs(rec - value) < 1e-9 * std::abs(value);
    }

    const auto dir = make_run_dir(inv.out_dir.empty() ? "out" : inv.out_dir, "oracle",
                                  inv.seed.value_or(0));
    out["all_pass"] = ok;
    write_text(dir / "oracle.json", out.dump(2) + "\n");
    std::cout << "oracle: all_pass=" << (ok ? "true" : "false") << "\n";
    std::cout << "wrote " << (dir / "oracle.json").string() << "\n";
    return ok ? 0 : 1;
}

}  // namespace cli_detail

/// Entry point shared by the binary and the tests; returns the exit code.
inline int run_cli(std::vector<std::string> args) {
    CLI::App app{"hsclt - Hilbert space-valued CLT laboratory"};
    app.require_subcommand(1);

    cli_detail::Invocation inv;
    std::uint64_t seed_flag = 0;
    bool seed_set = false;

    auto add_common = [&](CLI::App* sub, bool needs_spec) {
        auto* opt = sub->add_option("--spec", inv.spec_path, "experiment spec (.toml or .json)");
        if (needs_spec) opt->required();
        sub->add_option("--seed", seed_flag, "override the spec seed")
            ->each([&](const std::string&) { seed_set = true; });
        sub->add_option("--threads", inv.threads, "worker threads (default: machine)");
        sub->add_flag("--force", inv.force, "run even if the condition check fails");
        sub->add_option("--out", inv.out_dir, "output root (default: spec, HCLT_OUT, ./out)");
        sub->add_option("--budget", inv.budget_seconds, "wall-clock budget in seconds");
    };

    auto* check = app.add_subcommand("check", "evaluate the summability condition");
    add_common(check, true);
    auto* rank = app.add_subcommand("rank", "Hermite rank of the configured operator");
    add_common(rank, true);
    auto* clt = app.add_subcommand("clt", "replicated CLT experiment");
    add_common(clt, true);
    auto* continuous = app.add_subcommand("continuous", "continuous-time experiment");
    add_common(continuous, true);
    auto* bounds = app.add_subcommand("bounds", "quantitative d_2 bound terms");
    add_common(bounds, true);
    auto* oracle = app.add_subcommand("oracle", "brute-force reference value suite");
    add_common(oracle, false);

    std::reverse(args.begin(), args.end());
    try {
        app.parse(args);
    } catch (const CLI::ParseError& err) {
        const int code = app.exit(err);
        return code == 0 ? 0 : 1;
    }
    if (seed_set) inv.seed = seed_flag;

    try {
        if (check->parsed()) return cli_detail::cmd_check(inv);
        if (rank->parsed()) return cli_detail::cmd_rank(inv);
        if (clt->parsed()) return cli_detail::run_experiment_command(inv, false);
        if (continuous->parsed()) return cli_detail::run_experiment_command(inv, true);
        if (bounds->parsed()) return cli_detail::cmd_bounds(inv);
        if (oracle->parsed()) return cli_detail::cmd_oracle(inv);
    } catch (const SpecError& err) {
        std::cerr << "hsclt: " << err.what() << "\n";
        return 1;
    } catch (const std::exception& err) {
        std::cerr << "hsclt: error: " << err.what() << "\n";
        return 1;
    }
    return 1;
}

}  // namespace hsclt

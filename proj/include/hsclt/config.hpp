// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cctype>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include <hsclt/models.hpp>
#include <hsclt/operators.hpp>

namespace hsclt {

inline constexpr int kSchemaVersion = 1;

/// Raised for anything wrong with a spec document; the CLI maps it to exit 1.
struct SpecError : std::runtime_error {
    explicit SpecError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

// --- minimal TOML subset ---------------------------------------------------
// [section] headers and single-line `key = value` pairs, where value is a
// quoted string, a number, a boolean, or a one-line array of those. This
// covers hand-written experiment specs; machine-generated specs use JSON.

inline std::string toml_trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::string toml_strip_comment(const std::string& line) {
    bool in_string = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"') in_string = !in_string;
        if (line[i] == '#' && !in_string) return line.substr(0, i);
    }
    return line;
}

inline nlohmann::json toml_scalar(const std::string& text) {
    if (text.size() >= 2 && text.front() == '"' && text.back() == '"')
        return text.substr(1, text.size() - 2);
    if (text == "true") return true;
    if (text == "false") return false;
    try {
        std::size_t used = 0;
        if (text.find_first_of(".eE") == std::string::npos) {
            const long long v = std::stoll(text, &used);
            if (used == text.size()) return v;
        } else {
            const double v = std::stod(text, &used);
            if (used == text.size()) return v;
        }
    } catch (const std::exception&) {
    }
    throw SpecError("toml: cannot parse value '" + text + "'");
}

inline nlohmann::json toml_value(const std::string& text) {
    if (!text.empty() && text.front() == '[') {
        if (text.back() != ']') throw SpecError("toml: unterminated array (arrays are one line)");
        nlohmann::json arr = nlohmann::json::array();
        std::string body = text.substr(1, text.size() - 2);
        std::string item;
        bool in_string = false;
        for (char ch : body) {
            if (ch == '"') in_string = !in_string;
            if (ch == ',' && !in_string) {
                const std::string t = toml_trim(item);
                if (!t.empty()) arr.push_back(toml_scalar(t));
                item.clear();
            } else {
                item += ch;
            }
        }
        const std::string t = toml_trim(item);
        if (!t.empty()) arr.push_back(toml_scalar(t));
        return arr;
    }
    return toml_scalar(text);
}

inline nlohmann::json parse_toml_subset(std::istream& in) {
    nlohmann::json doc = nlohmann::json::object();
    nlohmann::json* section = &doc;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string text = toml_trim(toml_strip_comment(line));
        if (text.empty()) continue;
        if (text.front() == '[') {
            if (text.back() != ']') throw SpecError("toml: bad section header at line " +
                                                    std::to_string(lineno));
            const std::string name = toml_trim(text.substr(1, text.size() - 2));
            if (name.empty()) throw SpecError("toml: empty section name");
            doc[name] = nlohmann::json::object();
            section = &doc[name];
            continue;
        }
        const std::size_t eq = text.find('=');
        if (eq == std::string::npos)
            throw SpecError("toml: expected key = value at line " + std::to_string(lineno));
        const std::string key = toml_trim(text.substr(0, eq));
        const std::string value = toml_trim(text.substr(eq + 1));
        if (key.empty() || value.empty())
            throw SpecError("toml: empty key or value at line " + std::to_string(lineno));
        (*section)[key] = toml_value(value);
    }
    return doc;
}

inline void reject_unknown_keys(const nlohmann::json& obj, const std::set<std::string>& known,
                                const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!known.count(it.key()))
            throw SpecError("spec: unknown key '" + it.key() + "' in " + where);
}

template <class T>
T get_or(const nlohmann::json& obj, const std::string& key, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw SpecError("spec: bad type for '" + key + "'");
    }
}

template <class T>
T require(const nlohmann::json& obj, const std::string& key, const std::string& where) {
    if (!obj.contains(key)) throw SpecError("spec: missing '" + key + "' in " + where);
    try {
        return obj.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw SpecError("spec: bad type for '" + key + "' in " + where);
    }
}

}  // namespace detail

/// A parsed, validated, fully defaulted experiment specification.
struct ExperimentSpec {
    nlohmann::json resolved;  // canonical echo embedded into every report

    std::optional<ProcessModel> model;
    std::optional<OperatorG> op;

    std::vector<long> n_values;
    int replications = 1000;
    std::uint64_t seed = 1;
    std::vector<double> grid;

    std::optional<int> q_override;
    long v_max = 512;
    std::vector<int> m_values;

    std::string out_dir;  // empty = resolve from --out / HCLT_OUT / ./out
    bool want_csv = false;
    long mean_draws = 100000;  // neural operator mean pre-estimation
    long rank_samples = 20000;
    double spectrum_tail_mass = -1.0;  // >= 0 when the spectrum rule knows it

    const ProcessModel& require_model() const {
        if (!model) throw SpecError("spec: missing [model] block");
        return *model;
    }
    const OperatorG& require_operator() const {
        if (!op) throw SpecError("spec: missing [operator] block");
        return *op;
    }
};

inline ExperimentSpec parse_spec_json(const nlohmann::json& doc) {
    if (!doc.is_object()) throw SpecError("spec: document must be a table/object");
    detail::reject_unknown_keys(
        doc, {"model", "operator", "experiment", "condition", "bounds", "output"}, "document root");

    ExperimentSpec spec;
    spec.resolved = nlohmann::json::object();
    spec.resolved["schema_version"] = kSchemaVersion;

    // --- model ---
    if (doc.contains("model")) {
        const auto& m = doc.at("model");
        detail::reject_unknown_keys(
            m, {"variant", "dim", "spectrum", "spectrum_rule", "alphas", "weights", "beta"},
            "[model]");
        const std::string variant = detail::require<std::string>(m, "variant", "[model]");
        const int dim = detail::require<int>(m, "dim", "[model]");
        if (dim < 1 || dim > 64) throw SpecError("spec: dim must be in 1..64");

        std::vector<double> spectrum;
        std::string rule;
        if (m.contains("spectrum") && m.contains("spectrum_rule"))
            throw SpecError("spec: give either spectrum or spectrum_rule, not both");
        if (m.contains("spectrum")) {
            spectrum = detail::require<std::vector<double>>(m, "spectrum", "[model]");
            if (static_cast<int>(spectrum.size()) != dim)
                throw SpecError("spec: spectrum length must equal dim");
        } else if (m.contains("spectrum_rule")) {
            rule = detail::require<std::string>(m, "spectrum_rule", "[model]");
            if (rule == "brownian") {
                spectrum = brownian_increment_spectrum(dim);
                double partial = 0.0;
                for (double l : spectrum) partial += l;
                spec.spectrum_tail_mass = 0.5 - partial;
            } else if (rule.rfind("geometric:", 0) == 0) {
                const double ratio = std::stod(rule.substr(10));
                spectrum = geometric_spectrum(dim, ratio);
                spec.spectrum_tail_mass =
                    ratio < 1.0 ? std::pow(ratio, dim) / (1.0 - ratio) : -1.0;
            } else {
                throw SpecError("spec: unknown spectrum_rule '" + rule + "'");
            }
        } else {
            throw SpecError("spec: missing spectrum (or spectrum_rule) in [model]");
        }

        try {
            if (variant == "iid") {
                spec.model = ProcessModel::iid(spectrum);
            } else if (variant == "mdependent") {
                spec.model = ProcessModel::m_dependent(
                    spectrum, detail::require<std::vector<double>>(m, "weights", "[model]"));
            } else if (variant == "arh1") {
                spec.model = ProcessModel::arh1(
                    spectrum, detail::require<std::vector<double>>(m, "alphas", "[model]"));
            } else if (variant == "decoupled") {
                spec.model = ProcessModel::decoupled(
                    spectrum,
                    BetaRule::parse(detail::require<std::string>(m, "beta", "[model]")));
            } else {
                throw SpecError("spec: unknown model variant '" + variant + "'");
            }
        } catch (const std::invalid_argument& err) {
            throw SpecError(std::string("spec: ") + err.what());
        }

        nlohmann::json echo{{"variant", variant}, {"dim", dim}, {"spectrum", spectrum}};
        if (!rule.empty()) echo["spectrum_rule"] = rule;
        if (spec.spectrum_tail_mass >= 0.0) echo["spectrum_tail_mass"] = spec.spectrum_tail_mass;
        if (m.contains("alphas")) echo["alphas"] = m.at("alphas");
        if (m.contains("weights")) echo["weights"] = m.at("weights");
        if (m.contains("beta")) echo["beta"] = m.at("beta");
        spec.resolved["model"] = std::move(echo);
    }

    // --- operator ---
    if (doc.contains("operator")) {
        if (!spec.model) throw SpecError("spec: [operator] requires a [model] block");
        const auto& o = doc.at("operator");
        detail::reject_unknown_keys(
            o, {"kind", "j", "rank", "activation", "component_dim", "mean_draws", "rank_samples"},
            "[operator]");
        const std::string kind = detail::require<std::string>(o, "kind", "[operator]");
        const std::vector<double>& lam = spec.model->spectrum();
        try {
            if (kind == "identity") {
                spec.op = OperatorG::identity(lam);
            } else if (kind == "covariance") {
                spec.op = OperatorG::sample_covariance(lam);
            } else if (kind == "eigenvalue") {
                spec.op = OperatorG::eigenvalue_functional(
                    lam, detail::get_or<int>(o, "j", 1));
            } else if (kind == "neural") {
                const int rank = detail::require<int>(o, "rank", "[operator]");
                const int component_dim = detail::require<int>(o, "component_dim", "[operator]");
                const Activation act = Activation::parse(
                    detail::get_or<std::string>(o, "activation", "tanh"));
                spec.op = OperatorG::neural(lam, component_dim, rank, act);
            } else {
                throw SpecError("spec: unknown operator kind '" + kind + "'");
            }
        } catch (const std::invalid_argument& err) {
            throw SpecError(std::string("spec: ") + err.what());
        }
        spec.mean_draws = detail::get_or<long>(o, "mean_draws", spec.mean_draws);
        spec.rank_samples = detail::get_or<long>(o, "rank_samples", spec.rank_samples);
        if (spec.mean_draws < 100 || spec.rank_samples < 100)
            throw SpecError("spec: mean_draws/rank_samples too small");

        nlohmann::json echo{{"kind", kind}};
        for (const char* key : {"j", "rank", "activation", "component_dim"})
            if (o.contains(key)) echo[key] = o.at(key);
        echo["mean_draws"] = spec.mean_draws;
        echo["rank_samples"] = spec.rank_samples;
        spec.resolved["operator"] = std::move(echo);
    }

    // --- experiment ---
    if (doc.contains("experiment")) {
        const auto& e = doc.at("experiment");
        detail::reject_unknown_keys(e, {"n_values", "replications", "seed", "grid"},
                                    "[experiment]");
        spec.n_values = detail::require<std::vector<long>>(e, "n_values", "[experiment]");
        if (spec.n_values.empty()) throw SpecError("spec: n_values must be nonempty");
        for (long n : spec.n_values)
            if (n < 1) throw SpecError("spec: n_values must be positive");
        spec.replications = detail::get_or<int>(e, "replications", 1000);
        if (spec.replications < 100) throw SpecError("spec: replications must be >= 100");
        spec.seed = detail::get_or<std::uint64_t>(e, "seed", 1);
        spec.grid = detail::get_or<std::vector<double>>(e, "grid", {});
        spec.resolved["experiment"] = {{"n_values", spec.n_values},
                                       {"replications", spec.replications},
                                       {"seed", spec.seed},
                                       {"grid", spec.grid}};
    }

    // --- condition ---
    if (doc.contains("condition")) {
        const auto& c = doc.at("condition");
        detail::reject_unknown_keys(c, {"q", "v_max"}, "[condition]");
        if (c.contains("q")) {
            spec.q_override = detail::require<int>(c, "q", "[condition]");
            if (*spec.q_override < 1) throw SpecError("spec: q must be >= 1");
        }
        spec.v_max = detail::get_or<long>(c, "v_max", 512);
        if (spec.v_max < 32 || spec.v_max > (1L << 20))
            throw SpecError("spec: v_max outside 32..2^20");
    }
    spec.resolved["condition"] = {{"v_max", spec.v_max}};
    if (spec.q_override) spec.resolved["condition"]["q"] = *spec.q_override;

    // --- bounds ---
    if (doc.contains("bounds")) {
        const auto& b = doc.at("bounds");
        detail::reject_unknown_keys(b, {"m_values"}, "[bounds]");
        spec.m_values = detail::get_or<std::vector<int>>(b, "m_values", {});
        spec.resolved["bounds"] = {{"m_values", spec.m_values}};
    }

    // --- output ---
    if (doc.contains("output")) {
        const auto& o = doc.at("output");
        detail::reject_unknown_keys(o, {"directory", "formats"}, "[output]");
        spec.out_dir = detail::get_or<std::string>(o, "directory", "");
        const auto formats =
            detail::get_or<std::vector<std::string>>(o, "formats", {"json"});
        for (const auto& f : formats) {
            if (f == "csv")
                spec.want_csv = true;
            else if (f != "json")
                throw SpecError("spec: unknown output format '" + f + "'");
        }
        spec.resolved["output"] = {{"directory", spec.out_dir}, {"formats", formats}};
    }

    return spec;
}

inline ExperimentSpec parse_spec_text(const std::string& text, const std::string& kind) {
    if (kind == "json") {
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(text);
        } catch (const nlohmann::json::exception& err) {
            throw SpecError(std::string("spec: invalid JSON: ") + err.what());
        }
        return parse_spec_json(doc);
    }
    std::istringstream in(text);
    return parse_spec_json(detail::parse_toml_subset(in));
}

inline ExperimentSpec parse_spec_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SpecError("spec: cannot read '" + path + "'");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    const bool json = path.size() >= 5 && path.substr(path.size() - 5) == ".json";
    return parse_spec_text(buffer.str(), json ? "json" : "toml");
}

/// Hermite rank of the configured operator, default thresholds per the rank
/// machinery: exact tables for the closed forms, Monte Carlo for the neural
/// operator (threshold 1e-6 of the L2 norm, floored at 5 standard errors).
inline RankReport resolve_rank(const ExperimentSpec& spec) {
    const OperatorG& g = spec.require_operator();
    const std::vector<double>& lam = g.spectrum();
    switch (g.kind()) {
        case GKind::Identity:
            return rank_report(closed_form_coefficients(ClosedFormKind::Identity, lam), 1e-12);
        case GKind::SampleCovariance:
            return rank_report(closed_form_coefficients(ClosedFormKind::Covariance, lam), 1e-12);
        case GKind::EigenvalueFunctional:
            return rank_report(
                closed_form_coefficients(ClosedFormKind::Eigenvalue, lam, 6, 0, g.eigen_index()),
                1e-12);
        case GKind::HermiteDefined:
            return rank_report(g.table(), 1e-12);
        case GKind::NeuralOperator: {
            OperatorG frozen = g;
            if (!frozen.mean_frozen()) frozen.freeze_mean(spec.mean_draws, spec.seed ^ 0xfeed);
            // L2 norm of the centered operator by Monte Carlo
            RngStream rng = RngStream::substream(spec.seed, 0x12a0);
            const std::vector<double> mu = frozen.mean();
            double second = 0.0;
            const long draws = std::max<long>(2000, spec.rank_samples / 4);
            HilbertVector x(frozen.input_dim());
            for (long k = 0; k < draws; ++k) {
                for (int r = 0; r < frozen.input_dim(); ++r)
                    x[r] = std::sqrt(lam[r]) * rng.next_gaussian();
                const auto y = frozen.apply_raw(x);
                for (std::size_t t = 0; t < y.size(); ++t)
                    second += (y[t] - mu[t]) * (y[t] - mu[t]);
            }
            const double l2 = std::sqrt(second / static_cast<double>(draws));

            const int index_cap = std::min(frozen.input_dim(), 8);
            HermiteCoefficients table = estimate_coefficient_table(
                frozen.evaluator(), frozen.output_dim(), lam, 3, index_cap, spec.rank_samples,
                spec.seed ^ 0x0ac1e);
            // drop noise-level cells, then threshold at 1e-6 of the L2 norm
            double worst_se = 0.0;
            HermiteCoefficients kept;
            kept.degree_cap = table.degree_cap;
            kept.index_cap = table.index_cap;
            kept.output_dim = table.output_dim;
            for (const auto& e : table.entries) {
                if (e.l.degree() == 0) continue;
                worst_se = std::max(worst_se, e.std_error);
                if (std::abs(e.c) > 5.0 * e.std_error) kept.entries.push_back(e);
            }
            const double threshold = std::max(1e-6 * l2, 5.0 * worst_se);
            RankReport report = rank_report(kept, threshold, "monte-carlo");
            if (l2 > 0.0)
                report.parseval_defect =
                    std::max(0.0, 1.0 - kept.weighted_square_sum() / (l2 * l2));
            return report;
        }
    }
    throw std::logic_error("resolve_rank: unhandled operator kind");
}

/// q for the condition check: explicit override, else the operator's rank.
inline int resolve_q(const ExperimentSpec& spec) {
    if (spec.q_override) return *spec.q_override;
    if (spec.op) return resolve_rank(spec).rank;
    return 1;
}

/// Chaos coefficients of the configured operator (closed forms only).
inline std::optional<ChaosCoefficients> closed_form_chaos(const OperatorG& g) {
    const std::vector<double>& lam = g.spectrum();
    switch (g.kind()) {
        case GKind::Identity:
            return to_chaos_coefficients(closed_form_coefficients(ClosedFormKind::Identity, lam));
        case GKind::SampleCovariance:
            return to_chaos_coefficients(closed_form_coefficients(ClosedFormKind::Covariance, lam));
        case GKind::EigenvalueFunctional:
            return to_chaos_coefficients(
                closed_form_coefficients(ClosedFormKind::Eigenvalue, lam, 6, 0, g.eigen_index()));
        case GKind::HermiteDefined:
            return to_chaos_coefficients(g.table());
        case GKind::NeuralOperator:
            return std::nullopt;
    }
    return std::nullopt;
}

}  // namespace hsclt

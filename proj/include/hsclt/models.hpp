// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <hsclt/linalg.hpp>
#include <hsclt/rng.hpp>

namespace hsclt {

// Stationary Gaussian H-valued process families. All shipped variants have a
// diagonal score autocorrelation rho_rs(v) = rho_rr(v) delta_rs, so paths are
// simulated exactly in score coordinates (one scalar stationary sequence per
// basis direction) and embedded through sqrt(lambda_r).

enum class ModelKind { IID, MDependent, ARH1, DecoupledSpaceTime };

inline const char* to_string(ModelKind k) {
    switch (k) {
        case ModelKind::IID: return "iid";
        case ModelKind::MDependent: return "mdependent";
        case ModelKind::ARH1: return "arh1";
        case ModelKind::DecoupledSpaceTime: return "decoupled";
    }
    return "?";
}

/// Temporal decay profile beta(v) for the decoupled space-time variant.
struct BetaRule {
    enum class Kind { Geometric, Polynomial };
    Kind kind = Kind::Geometric;
    double param = 0.5;

    double operator()(long v) const {
        const double av = static_cast<double>(v < 0 ? -v : v);
        if (kind == Kind::Geometric) return std::pow(param, av);
        return std::pow(1.0 + av, -param);
    }

    std::string spec_string() const {
        return std::string(kind == Kind::Geometric ? "geometric:" : "polynomial:") +
               std::to_string(param);
    }

    // accepts "geometric:RATIO" or "polynomial:EXPONENT"
    static BetaRule parse(const std::string& text) {
        const auto colon = text.find(':');
        if (colon == std::string::npos) throw std::invalid_argument("beta rule: missing ':'");
        const std::string name = text.substr(0, colon);
        const double param = std::stod(text.substr(colon + 1));
        BetaRule rule;
        rule.param = param;
        if (name == "geometric") {
            if (param <= 0.0 || param >= 1.0)
                throw std::invalid_argument("beta rule: geometric ratio must be in (0,1)");
            rule.kind = Kind::Geometric;
        } else if (name == "polynomial") {
            if (param <= 0.0) throw std::invalid_argument("beta rule: exponent must be positive");
            rule.kind = Kind::Polynomial;
        } else {
            throw std::invalid_argument("beta rule: unknown kind '" + name + "'");
        }
        return rule;
    }
};

/// Scores <X_k, Q^{-1/2} u_r> for k = 0..n-1, r = 1..D. Each column is a
/// stationary standard-Gaussian sequence.
struct ScorePath {
    long n = 0;
    int dim = 0;
    std::vector<double> scores;  // row-major n x D
    std::uint64_t seed = 0;

    double at(long k, int r) const { return scores[static_cast<std::size_t>(k) * dim + r]; }
    double& at(long k, int r) { return scores[static_cast<std::size_t>(k) * dim + r]; }

    void write_csv(std::ostream& out) const {
        out << "t";
        for (int r = 1; r <= dim; ++r) out << ",s_" << r;
        out << "\n";
        char buf[32];
        for (long k = 0; k < n; ++k) {
            out << k;
            for (int r = 0; r < dim; ++r) {
                std::snprintf(buf, sizeof(buf), "%.17g", at(k, r));
                out << "," << buf;
            }
            out << "\n";
        }
    }
};

class ProcessModel {
  public:
    static ProcessModel iid(std::vector<double> spectrum) {
        return ProcessModel(ModelKind::IID, std::move(spectrum));
    }

    /// MA(m) over i.i.d. Gaussian innovations with the given weights
    /// (w_0..w_m), score-standardized; rho vanishes exactly beyond lag m.
    static ProcessModel m_dependent(std::vector<double> spectrum, std::vector<double> weights) {
        ProcessModel m(ModelKind::MDependent, std::move(spectrum));
        if (weights.empty()) throw std::invalid_argument("m-dependent model: empty weights");
        double w2 = 0.0;
        for (double w : weights) w2 += w * w;
        if (w2 <= 0.0) throw std::invalid_argument("m-dependent model: zero weights");
        m.weights_ = std::move(weights);
        m.weight_sq_ = w2;
        return m;
    }

    /// ARH(1) with compact symmetric psi = sum alpha_j u_j (x) u_j; the scores
    /// are independent scalar AR(1) sequences with coefficients alpha_r.
    static ProcessModel arh1(std::vector<double> spectrum, std::vector<double> alphas) {
        ProcessModel m(ModelKind::ARH1, std::move(spectrum));
        if (static_cast<int>(alphas.size()) != m.dim_)
            throw std::invalid_argument("arh1 model: alphas must match dim");
        for (std::size_t j = 0; j < alphas.size(); ++j) {
            if (alphas[j] <= 0.0 || alphas[j] >= 1.0)
                throw std::invalid_argument("arh1 model: alphas must lie in (0,1)");
            if (j > 0 && alphas[j] > alphas[j - 1])
                throw std::invalid_argument("arh1 model: alphas must be nonincreasing");
        }
        m.alphas_ = std::move(alphas);
        return m;
    }

    static ProcessModel decoupled(std::vector<double> spectrum, BetaRule beta) {
        ProcessModel m(ModelKind::DecoupledSpaceTime, std::move(spectrum));
        m.beta_ = beta;
        return m;
    }

    ModelKind kind() const { return kind_; }
    int dim() const { return dim_; }
    const std::vector<double>& spectrum() const { return spectrum_; }
    const std::vector<double>& alphas() const { return alphas_; }
    const std::vector<double>& weights() const { return weights_; }
    const BetaRule& beta() const { return beta_; }
    int dependence_order() const { return static_cast<int>(weights_.size()) - 1; }

    /// Exact score autocorrelation rho_rs(v), 1-based indices r,s in 1..D.
    /// Satisfies rho_rs(v) = rho_sr(-v) and rho_rs(0) = delta_rs.
    double rho(int r, int s, long v) const {
        if (r < 1 || r > dim_ || s < 1 || s > dim_)
            throw std::out_of_range("rho: score index out of range");
        if (r != s) return 0.0;
        switch (kind_) {
            case ModelKind::IID:
                return v == 0 ? 1.0 : 0.0;
            case ModelKind::MDependent:
                return weight_autocorrelation(v);
            case ModelKind::ARH1:
                return std::pow(alphas_[r - 1], static_cast<double>(v < 0 ? -v : v));
            case ModelKind::DecoupledSpaceTime:
                return beta_(v);
        }
        return 0.0;
    }

    // All shipped variants have diagonal rho; kept as a queryable fact so the
    // chaos sums can use the fast path without guessing.
    bool diagonal_rho() const { return true; }

    /// Exact-in-distribution stationary sample in score coordinates.
    /// Innovations are drawn column-major: column r is generated completely
    /// (stationary initial condition first) before column r+1.
    ScorePath simulate_path(long n, RngStream& rng, std::uint64_t seed_record = 0) const {
        if (n < 1) throw std::invalid_argument("simulate_path: n must be >= 1");
        ScorePath path;
        path.n = n;
        path.dim = dim_;
        path.seed = seed_record;
        path.scores.assign(static_cast<std::size_t>(n) * dim_, 0.0);
        for (int r = 0; r < dim_; ++r) {
            switch (kind_) {
                case ModelKind::IID:
                    for (long k = 0; k < n; ++k) path.at(k, r) = rng.next_gaussian();
                    break;
                case ModelKind::MDependent: {
                    const int m = dependence_order();
                    std::vector<double> innov(static_cast<std::size_t>(n) + m);
                    for (auto& e : innov) e = rng.next_gaussian();
                    const double scale = 1.0 / std::sqrt(weight_sq_);
                    for (long k = 0; k < n; ++k) {
                        double acc = 0.0;
                        for (int j = 0; j <= m; ++j) acc += weights_[j] * innov[k + m - j];
                        path.at(k, r) = acc * scale;
                    }
                    break;
                }
                case ModelKind::ARH1: {
                    const double a = alphas_[r];
                    const double noise = std::sqrt(1.0 - a * a);
                    double s = rng.next_gaussian();
                    path.at(0, r) = s;
                    for (long k = 1; k < n; ++k) {
                        s = a * s + noise * rng.next_gaussian();
                        path.at(k, r) = s;
                    }
                    break;
                }
                case ModelKind::DecoupledSpaceTime: {
                    if (beta_.kind != BetaRule::Kind::Geometric)
                        throw std::runtime_error(
                            "simulate_path: only geometric beta is simulable; polynomial beta "
                            "models are condition-check only");
                    const double a = beta_.param;
                    const double noise = std::sqrt(1.0 - a * a);
                    double s = rng.next_gaussian();
                    path.at(0, r) = s;
                    for (long k = 1; k < n; ++k) {
                        s = a * s + noise * rng.next_gaussian();
                        path.at(k, r) = s;
                    }
                    break;
                }
            }
        }
        return path;
    }

    ScorePath simulate_path(long n, std::uint64_t seed) const {
        RngStream rng = RngStream::substream(seed, 0);
        return simulate_path(n, rng, seed);
    }

    /// X_k = sum_r sqrt(lambda_r) score_{k,r} u_r, so Var<X,u_r> = lambda_r.
    std::vector<HilbertVector> embed_scores(const ScorePath& path) const {
        if (path.dim != dim_) throw std::invalid_argument("embed_scores: dimension mismatch");
        std::vector<double> root(spectrum_.size());
        for (std::size_t j = 0; j < root.size(); ++j) root[j] = std::sqrt(spectrum_[j]);
        std::vector<HilbertVector> out;
        out.reserve(path.n);
        for (long k = 0; k < path.n; ++k) {
            HilbertVector x(dim_);
            for (int r = 0; r < dim_; ++r) x[r] = root[r] * path.at(k, r);
            out.push_back(std::move(x));
        }
        return out;
    }

    HilbertVector embed_row(const ScorePath& path, long k) const {
        HilbertVector x(dim_);
        for (int r = 0; r < dim_; ++r) x[r] = std::sqrt(spectrum_[r]) * path.at(k, r);
        return x;
    }

  private:
    ProcessModel(ModelKind kind, std::vector<double> spectrum)
        : kind_(kind), dim_(static_cast<int>(spectrum.size())), spectrum_(std::move(spectrum)) {
        if (dim_ < 1) throw std::invalid_argument("process model: empty spectrum");
        const double floor = spectrum_.front() * 1e-12;
        for (std::size_t j = 0; j < spectrum_.size(); ++j) {
            if (!(spectrum_[j] > 0.0) || spectrum_[j] < floor)
                throw std::invalid_argument(
                    "process model: eigenvalues must be positive and above 1e-12 * lambda_1 "
                    "(Q^{-1/2} appears in the score definition)");
            if (j > 0 && spectrum_[j] > spectrum_[j - 1])
                throw std::invalid_argument("process model: eigenvalues must be nonincreasing");
        }
    }

    double weight_autocorrelation(long v) const {
        const long av = v < 0 ? -v : v;
        const int m = dependence_order();
        if (av > m) return 0.0;
        double s = 0.0;
        for (int j = 0; j + av <= m; ++j) s += weights_[j] * weights_[j + av];
        return s / weight_sq_;
    }

    ModelKind kind_;
    int dim_;
    std::vector<double> spectrum_;
    std::vector<double> alphas_;
    std::vector<double> weights_;
    double weight_sq_ = 0.0;
    BetaRule beta_;
};

/// First D Karhunen-Loeve eigenvalues of the kernel s ^ t on [0,1]
/// (the covariance of the Brownian increments eps_k = W_{k+.} - W_k):
/// lambda_j = 4 / (pi^2 (2j-1)^2), decreasing, with sum -> 1/2.
inline std::vector<double> brownian_increment_spectrum(int dim) {
    if (dim < 1) throw std::invalid_argument("brownian_increment_spectrum: dim must be >= 1");
    constexpr double pi = 3.14159265358979323846;
    std::vector<double> lambda(dim);
    for (int j = 1; j <= dim; ++j) lambda[j - 1] = 4.0 / (pi * pi * (2.0 * j - 1.0) * (2.0 * j - 1.0));
    return lambda;
}

inline std::vector<double> geometric_spectrum(int dim, double ratio) {
    if (dim < 1 || ratio <= 0.0 || ratio > 1.0)
        throw std::invalid_argument("geometric_spectrum: need dim >= 1 and ratio in (0,1]");
    std::vector<double> lambda(dim);
    double v = 1.0;
    for (int j = 0; j < dim; ++j, v *= ratio) lambda[j] = v;
    return lambda;
}

}  // namespace hsclt

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <hsclt/hermite.hpp>
#include <hsclt/linalg.hpp>
#include <hsclt/models.hpp>
#include <hsclt/rng.hpp>

namespace hsclt {

// The catalog of subordinating operators G and the statistics built from
// them: S_n = n^{-1/2} sum_k (G[X_k] - E G[X_k]) and the continuous-time
// partial sums V_n(t). Output elements are carried as flat coordinate
// vectors against the output basis; for operator-valued outputs the flat
// index of the basis pair (r,s) is (r-1) * D + (s-1).

enum class GKind { Identity, SampleCovariance, EigenvalueFunctional, NeuralOperator, HermiteDefined };
enum class OutputKind { Scalar, Vector, Operator };

inline const char* to_string(GKind k) {
    switch (k) {
        case GKind::Identity: return "identity";
        case GKind::SampleCovariance: return "covariance";
        case GKind::EigenvalueFunctional: return "eigenvalue";
        case GKind::NeuralOperator: return "neural";
        case GKind::HermiteDefined: return "hermite";
    }
    return "?";
}

struct Activation {
    enum class Kind { Identity, Tanh, Relu };
    Kind kind = Kind::Identity;

    double operator()(double t) const {
        switch (kind) {
            case Kind::Identity: return t;
            case Kind::Tanh: return std::tanh(t);
            case Kind::Relu: return t > 0.0 ? t : 0.0;
        }
        return t;
    }

    static Activation parse(const std::string& name) {
        if (name == "identity") return {Kind::Identity};
        if (name == "tanh") return {Kind::Tanh};
        if (name == "relu") return {Kind::Relu};
        throw std::invalid_argument("activation: unknown kind '" + name + "'");
    }
    const char* name() const {
        switch (kind) {
            case Kind::Identity: return "identity";
            case Kind::Tanh: return "tanh";
            case Kind::Relu: return "relu";
        }
        return "?";
    }
};

class OperatorG {
  public:
    static OperatorG identity(std::vector<double> spectrum) {
        OperatorG g(GKind::Identity, std::move(spectrum));
        g.output_kind_ = OutputKind::Vector;
        g.output_dim_ = g.input_dim();
        return g;
    }

    /// G[x] = x (x) x - Q, values in HS(H).
    static OperatorG sample_covariance(std::vector<double> spectrum) {
        OperatorG g(GKind::SampleCovariance, std::move(spectrum));
        g.output_kind_ = OutputKind::Operator;
        g.output_dim_ = g.input_dim() * g.input_dim();
        return g;
    }

    /// G_j[x] = <x, v_j>^2 - lambda_j, scalar-valued; j is 1-based.
    static OperatorG eigenvalue_functional(std::vector<double> spectrum, int j) {
        OperatorG g(GKind::EigenvalueFunctional, std::move(spectrum));
        if (j < 1 || j > g.input_dim())
            throw std::invalid_argument("eigenvalue functional: index out of range");
        g.eigen_index_ = j;
        g.output_kind_ = OutputKind::Scalar;
        g.output_dim_ = 1;
        return g;
    }

    /// Single-layer low-rank neural operator: the input stacks the 2r kernel
    /// components (Phi^(1)..Phi^(r), Psi^(1)..Psi^(r)), each of dimension
    /// component_dim, under the Cartesian inner product; the output is the
    /// activation applied entrywise to the coefficient matrix of
    /// sum_j <Psi^(j), .> Phi^(j).
    static OperatorG neural(std::vector<double> stacked_spectrum, int component_dim, int rank,
                            Activation activation) {
        OperatorG g(GKind::NeuralOperator, std::move(stacked_spectrum));
        if (component_dim < 1 || rank < 1)
            throw std::invalid_argument("neural operator: rank and component_dim must be >= 1");
        if (g.input_dim() != 2 * rank * component_dim)
            throw std::invalid_argument(
                "neural operator: spectrum length must equal 2 * rank * component_dim");
        g.component_dim_ = component_dim;
        g.rank_ = rank;
        g.activation_ = activation;
        g.output_kind_ = OutputKind::Operator;
        g.output_dim_ = component_dim * component_dim;
        return g;
    }

    /// G defined by an explicit Hermite coefficient table; degree-zero cells
    /// are the mean and are excluded from the centered evaluation.
    static OperatorG hermite_defined(std::vector<double> spectrum, HermiteCoefficients table) {
        OperatorG g(GKind::HermiteDefined, std::move(spectrum));
        if (table.output_dim < 1)
            throw std::invalid_argument("hermite-defined operator: output_dim must be set");
        for (const auto& e : table.entries)
            if (e.l.max_pos() > g.input_dim())
                throw std::invalid_argument(
                    "hermite-defined operator: multi-index beyond the truncation level");
        g.table_ = std::move(table);
        g.output_kind_ = g.table_.output_dim == 1 ? OutputKind::Scalar : OutputKind::Vector;
        g.output_dim_ = g.table_.output_dim;
        return g;
    }

    GKind kind() const { return kind_; }
    OutputKind output_kind() const { return output_kind_; }
    int input_dim() const { return static_cast<int>(spectrum_.size()); }
    int output_dim() const { return output_dim_; }
    const std::vector<double>& spectrum() const { return spectrum_; }
    int eigen_index() const { return eigen_index_; }
    int rank() const { return rank_; }
    int component_dim() const { return component_dim_; }
    Activation activation() const { return activation_; }
    const HermiteCoefficients& table() const { return table_; }

    /// Raw evaluation, no centering: Identity -> x, SampleCovariance -> x(x)x,
    /// EigenvalueFunctional -> <x,v_j>^2, NeuralOperator -> sigma(kernel
    /// matrix), HermiteDefined -> full table sum including degree zero.
    std::vector<double> apply_raw(const HilbertVector& x) const {
        if (x.dim() != input_dim()) throw std::invalid_argument("apply: dimension mismatch");
        std::vector<double> out;
        switch (kind_) {
            case GKind::Identity:
                out = x.coeffs;
                break;
            case GKind::SampleCovariance: {
                const int d = input_dim();
                out.resize(static_cast<std::size_t>(d) * d);
                for (int r = 0; r < d; ++r)
                    for (int s = 0; s < d; ++s) out[r * d + s] = x[r] * x[s];
                break;
            }
            case GKind::EigenvalueFunctional: {
                const double proj = x[eigen_index_ - 1];
                out = {proj * proj};
                break;
            }
            case GKind::NeuralOperator: {
                const int dc = component_dim_;
                out.assign(static_cast<std::size_t>(dc) * dc, 0.0);
                for (int j = 0; j < rank_; ++j) {
                    const int phi = j * dc;
                    const int psi = (rank_ + j) * dc;
                    for (int a = 0; a < dc; ++a)
                        for (int b = 0; b < dc; ++b) out[a * dc + b] += x[phi + a] * x[psi + b];
                }
                for (double& e : out) e = activation_(e);
                break;
            }
            case GKind::HermiteDefined: {
                out.assign(static_cast<std::size_t>(output_dim_), 0.0);
                std::vector<double> w(input_dim());
                for (int r = 0; r < input_dim(); ++r) w[r] = x[r] / std::sqrt(spectrum_[r]);
                for (const auto& e : table_.entries)
                    out[e.i - 1] += e.c * hermite_product_eval(e.l, w);
                break;
            }
        }
        return out;
    }

    /// E G[X_1] in flat coordinates. Analytic for the closed forms and for
    /// Hermite tables; the neural operator mean must be frozen by Monte
    /// Carlo first (freeze_mean), since it has no closed form.
    std::vector<double> mean() const {
        std::vector<double> mu(static_cast<std::size_t>(output_dim_), 0.0);
        switch (kind_) {
            case GKind::Identity:
                break;
            case GKind::SampleCovariance: {
                const int d = input_dim();
                for (int r = 0; r < d; ++r) mu[r * d + r] = spectrum_[r];
                break;
            }
            case GKind::EigenvalueFunctional:
                mu[0] = spectrum_[eigen_index_ - 1];
                break;
            case GKind::NeuralOperator:
                if (!frozen_mean_)
                    throw std::runtime_error(
                        "neural operator: mean not frozen; call freeze_mean first");
                mu = *frozen_mean_;
                break;
            case GKind::HermiteDefined:
                for (const auto& e : table_.entries)
                    if (e.l.degree() == 0) mu[e.i - 1] += e.c;
                break;
        }
        return mu;
    }

    /// Pre-estimate and freeze E G[X_1] by Monte Carlo under gamma_Q on the
    /// stacked input space. Returns the largest entrywise standard error.
    double freeze_mean(long n_draws, std::uint64_t seed) {
        if (kind_ != GKind::NeuralOperator)
            throw std::logic_error("freeze_mean: only the neural operator needs it");
        if (n_draws < 100) throw std::invalid_argument("freeze_mean: too few draws");
        RngStream rng = RngStream::substream(seed, 0xfe11a5);
        const int d = input_dim();
        std::vector<double> root(d);
        for (int r = 0; r < d; ++r) root[r] = std::sqrt(spectrum_[r]);
        std::vector<double> acc(static_cast<std::size_t>(output_dim_), 0.0);
        std::vector<double> acc2(acc.size(), 0.0);
        HilbertVector x(d);
        for (long k = 0; k < n_draws; ++k) {
            for (int r = 0; r < d; ++r) x[r] = root[r] * rng.next_gaussian();
            const std::vector<double> y = apply_raw(x);
            for (std::size_t t = 0; t < acc.size(); ++t) {
                acc[t] += y[t];
                acc2[t] += y[t] * y[t];
            }
        }
        double worst_se = 0.0;
        for (std::size_t t = 0; t < acc.size(); ++t) {
            acc[t] /= static_cast<double>(n_draws);
            const double var = acc2[t] / static_cast<double>(n_draws) - acc[t] * acc[t];
            worst_se = std::max(worst_se, std::sqrt(std::max(0.0, var) / n_draws));
        }
        frozen_mean_ = std::move(acc);
        frozen_mean_se_ = worst_se;
        return worst_se;
    }

    bool mean_frozen() const { return kind_ != GKind::NeuralOperator || frozen_mean_.has_value(); }
    double frozen_mean_std_error() const { return frozen_mean_se_; }

    /// Centered evaluation G[x] - E G[X_1]; the subordinated summands are
    /// always taken mean zero.
    std::vector<double> apply(const HilbertVector& x) const {
        std::vector<double> y = apply_raw(x);
        if (kind_ == GKind::Identity) return y;  // already centered
        const std::vector<double> mu = mean();
        for (std::size_t t = 0; t < y.size(); ++t) y[t] -= mu[t];
        return y;
    }

    /// Adapter for the coefficient estimators (raw output coordinates).
    std::function<std::vector<double>(const HilbertVector&)> evaluator() const {
        return [this](const HilbertVector& x) { return apply_raw(x); };
    }

  private:
    OperatorG(GKind kind, std::vector<double> spectrum)
        : kind_(kind), spectrum_(std::move(spectrum)) {
        if (spectrum_.empty()) throw std::invalid_argument("operator: empty spectrum");
    }

    GKind kind_;
    std::vector<double> spectrum_;
    OutputKind output_kind_ = OutputKind::Scalar;
    int output_dim_ = 1;
    int eigen_index_ = 1;
    int rank_ = 0;
    int component_dim_ = 0;
    Activation activation_;
    HermiteCoefficients table_;
    std::optional<std::vector<double>> frozen_mean_;
    double frozen_mean_se_ = 0.0;
};

/// One realized value of S_n (or V_n(t)) in flat output coordinates.
struct PartialSumSample {
    std::vector<double> value;
    OutputKind kind = OutputKind::Scalar;
    long n = 0;
    bool centered = true;

    double scalar() const { return value.at(0); }

    HilbertVector as_vector() const { return HilbertVector(value); }

    HilbertOperator as_operator() const {
        const int d = static_cast<int>(std::lround(std::sqrt(static_cast<double>(value.size()))));
        if (static_cast<std::size_t>(d) * d != value.size())
            throw std::logic_error("PartialSumSample: value is not an operator");
        HilbertOperator op(d);
        for (int r = 0; r < d; ++r)
            for (int s = 0; s < d; ++s) op(r, s) = value[r * d + s];
        return op;
    }
};

/// S_n = n^{-1/2} sum_{k<=n} (G[X_k] - mu_G). With center = false the
/// analytic mean is kept in the sum.
inline PartialSumSample partial_sum(const OperatorG& g, const std::vector<HilbertVector>& path,
                                    bool center = true) {
    if (path.empty()) throw std::invalid_argument("partial_sum: empty path");
    const long n = static_cast<long>(path.size());
    PartialSumSample out;
    out.kind = g.output_kind();
    out.n = n;
    out.centered = center;
    out.value.assign(static_cast<std::size_t>(g.output_dim()), 0.0);
    const std::vector<double> mu =
        center ? g.mean() : std::vector<double>(out.value.size(), 0.0);
    for (const auto& x : path) {
        const std::vector<double> y = g.apply_raw(x);
        for (std::size_t t = 0; t < out.value.size(); ++t) out.value[t] += y[t] - mu[t];
    }
    const double scale = 1.0 / std::sqrt(static_cast<double>(n));
    for (double& v : out.value) v *= scale;
    return out;
}

/// V_n(t) = n^{-1/2} sum_{k <= floor(nt)} (G[X_k] - mu_G) on a grid of times
/// in [0,1]. floor(nt) is taken exactly; V_n(0) = 0 and V_n(1) = S_n.
inline std::vector<PartialSumSample> continuous_partial_sum(const OperatorG& g,
                                                            const std::vector<HilbertVector>& path,
                                                            const std::vector<double>& grid) {
    const long n = static_cast<long>(path.size());
    if (n < 1) throw std::invalid_argument("continuous_partial_sum: empty path");
    for (double t : grid)
        if (t < 0.0 || t > 1.0)
            throw std::invalid_argument("continuous_partial_sum: grid point outside [0,1]");

    // prefix sums of the centered summands
    const std::size_t width = static_cast<std::size_t>(g.output_dim());
    const std::vector<double> mu = g.mean();
    std::vector<std::vector<double>> prefix(static_cast<std::size_t>(n) + 1,
                                            std::vector<double>(width, 0.0));
    for (long k = 0; k < n; ++k) {
        const std::vector<double> y = g.apply_raw(path[k]);
        for (std::size_t t = 0; t < width; ++t) prefix[k + 1][t] = prefix[k][t] + y[t] - mu[t];
    }
    const double scale = 1.0 / std::sqrt(static_cast<double>(n));
    std::vector<PartialSumSample> out;
    out.reserve(grid.size());
    for (double t : grid) {
        const long cut = static_cast<long>(std::floor(static_cast<double>(n) * t));
        PartialSumSample sample;
        sample.kind = g.output_kind();
        sample.n = n;
        sample.centered = true;
        sample.value = prefix[std::min<long>(cut, n)];
        for (double& v : sample.value) v *= scale;
        out.push_back(std::move(sample));
    }
    return out;
}

/// Gamma_n = n^{-1} sum_k <X_k, .> X_k, the sample covariance operator.
inline HilbertOperator sample_covariance_operator(const std::vector<HilbertVector>& path) {
    if (path.empty()) throw std::invalid_argument("sample_covariance_operator: empty path");
    const int d = path.front().dim();
    HilbertOperator gamma(d);
    for (const auto& x : path)
        for (int r = 0; r < d; ++r)
            for (int s = 0; s < d; ++s) gamma(r, s) += x[r] * x[s];
    gamma *= 1.0 / static_cast<double>(path.size());
    return gamma;
}

}  // namespace hsclt

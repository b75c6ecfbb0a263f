// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace hsclt {

// Finite truncations of separable Hilbert spaces: elements are coefficient
// vectors against a fixed orthonormal basis {u_1..u_D}, operators are dense
// D x D matrices of basis coefficients <T u_j, u_i>. Dense storage is the
// supported envelope (D <= 64 for operator-valued work).

struct HilbertVector {
    std::vector<double> coeffs;

    HilbertVector() = default;
    explicit HilbertVector(int dim) : coeffs(static_cast<std::size_t>(dim), 0.0) {}
    explicit HilbertVector(std::vector<double> c) : coeffs(std::move(c)) {}

    int dim() const { return static_cast<int>(coeffs.size()); }

    double& operator[](int i) { return coeffs[static_cast<std::size_t>(i)]; }
    double operator[](int i) const { return coeffs[static_cast<std::size_t>(i)]; }

    // Parseval at the truncation level: ||x||^2 = sum of squared coefficients.
    double squared_norm() const {
        double s = 0.0;
        for (double c : coeffs) s += c * c;
        return s;
    }
    double norm() const { return std::sqrt(squared_norm()); }

    double inner(const HilbertVector& other) const {
        require_same_dim(other);
        double s = 0.0;
        for (int i = 0; i < dim(); ++i) s += coeffs[i] * other.coeffs[i];
        return s;
    }

    HilbertVector& operator+=(const HilbertVector& other) {
        require_same_dim(other);
        for (int i = 0; i < dim(); ++i) coeffs[i] += other.coeffs[i];
        return *this;
    }
    HilbertVector& operator*=(double a) {
        for (double& c : coeffs) c *= a;
        return *this;
    }

  private:
    void require_same_dim(const HilbertVector& other) const {
        if (other.dim() != dim()) throw std::invalid_argument("HilbertVector: dimension mismatch");
    }
};

class HilbertOperator {
  public:
    HilbertOperator() = default;
    explicit HilbertOperator(int dim)
        : dim_(dim), entries_(static_cast<std::size_t>(dim) * dim, 0.0) {
        if (dim < 0) throw std::invalid_argument("HilbertOperator: negative dimension");
    }

    static HilbertOperator identity(int dim) {
        HilbertOperator op(dim);
        for (int i = 0; i < dim; ++i) op(i, i) = 1.0;
        return op;
    }
    static HilbertOperator diagonal(const std::vector<double>& d) {
        HilbertOperator op(static_cast<int>(d.size()));
        for (int i = 0; i < op.dim(); ++i) op(i, i) = d[i];
        return op;
    }

    int dim() const { return dim_; }

    double& operator()(int i, int j) { return entries_[static_cast<std::size_t>(i) * dim_ + j]; }
    double operator()(int i, int j) const {
        return entries_[static_cast<std::size_t>(i) * dim_ + j];
    }

    const std::vector<double>& raw() const { return entries_; }

    HilbertVector apply(const HilbertVector& x) const {
        if (x.dim() != dim_) throw std::invalid_argument("HilbertOperator: dimension mismatch");
        HilbertVector y(dim_);
        for (int i = 0; i < dim_; ++i) {
            double s = 0.0;
            for (int j = 0; j < dim_; ++j) s += (*this)(i, j) * x[j];
            y[i] = s;
        }
        return y;
    }

    double trace() const {
        double s = 0.0;
        for (int i = 0; i < dim_; ++i) s += (*this)(i, i);
        return s;
    }

    HilbertOperator transpose() const {
        HilbertOperator t(dim_);
        for (int i = 0; i < dim_; ++i)
            for (int j = 0; j < dim_; ++j) t(j, i) = (*this)(i, j);
        return t;
    }

    HilbertOperator symmetrized() const {
        HilbertOperator s(dim_);
        for (int i = 0; i < dim_; ++i)
            for (int j = 0; j < dim_; ++j) s(i, j) = 0.5 * ((*this)(i, j) + (*this)(j, i));
        return s;
    }

    double symmetry_defect() const {
        double d = 0.0;
        for (int i = 0; i < dim_; ++i)
            for (int j = 0; j < dim_; ++j) d = std::max(d, std::abs((*this)(i, j) - (*this)(j, i)));
        return d;
    }

    HilbertOperator& operator+=(const HilbertOperator& other) {
        require_same_dim(other);
        for (std::size_t k = 0; k < entries_.size(); ++k) entries_[k] += other.entries_[k];
        return *this;
    }
    HilbertOperator& operator-=(const HilbertOperator& other) {
        require_same_dim(other);
        for (std::size_t k = 0; k < entries_.size(); ++k) entries_[k] -= other.entries_[k];
        return *this;
    }
    HilbertOperator& operator*=(double a) {
        for (double& e : entries_) e *= a;
        return *this;
    }
    friend HilbertOperator operator-(HilbertOperator a, const HilbertOperator& b) {
        a -= b;
        return a;
    }
    friend HilbertOperator operator+(HilbertOperator a, const HilbertOperator& b) {
        a += b;
        return a;
    }

  private:
    void require_same_dim(const HilbertOperator& other) const {
        if (other.dim_ != dim_) throw std::invalid_argument("HilbertOperator: dimension mismatch");
    }

    int dim_ = 0;
    std::vector<double> entries_;
};

inline double hs_norm(const HilbertOperator& op) {
    double s = 0.0;
    for (double e : op.raw()) s += e * e;
    return std::sqrt(s);
}

inline double hs_distance(const HilbertOperator& a, const HilbertOperator& b) {
    return hs_norm(a - b);
}

// x (x) y as an operator: entries (i,j) = x_i y_j, so that (x(x)y)[z] = <y,z> x.
inline HilbertOperator outer_product(const HilbertVector& x, const HilbertVector& y) {
    if (x.dim() != y.dim()) throw std::invalid_argument("outer_product: dimension mismatch");
    HilbertOperator op(x.dim());
    for (int i = 0; i < x.dim(); ++i)
        for (int j = 0; j < y.dim(); ++j) op(i, j) = x[i] * y[j];
    return op;
}

struct SymmetricEigen {
    std::vector<double> values;           // sorted decreasing
    std::vector<std::vector<double>> vectors;  // vectors[k] pairs with values[k]
};

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. The input is
/// symmetrized first; accuracy is ~1e-14 relative on the spectra used here.
inline SymmetricEigen symmetric_eigen(const HilbertOperator& input, bool want_vectors = true) {
    const int n = input.dim();
    HilbertOperator a = input.symmetrized();
    std::vector<std::vector<double>> v;
    if (want_vectors) {
        v.assign(n, std::vector<double>(n, 0.0));
        for (int i = 0; i < n; ++i) v[i][i] = 1.0;  // v[k] accumulates eigenvector k
    }

    double scale = 0.0;
    for (double e : a.raw()) scale = std::max(scale, std::abs(e));
    const double tol = (scale > 0.0 ? scale : 1.0) * 1e-15;

    for (int sweep = 0; sweep < 64; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off = std::max(off, std::abs(a(p, q)));
        if (off <= tol) break;
        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (std::abs(apq) <= tol * 1e-2) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = a(p, k);
                    const double aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                if (want_vectors) {
                    for (int k = 0; k < n; ++k) {
                        const double vkp = v[p][k];
                        const double vkq = v[q][k];
                        v[p][k] = c * vkp - s * vkq;
                        v[q][k] = s * vkp + c * vkq;
                    }
                }
            }
        }
    }

    SymmetricEigen out;
    out.values.resize(n);
    for (int i = 0; i < n; ++i) out.values[i] = a(i, i);
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](int lhs, int rhs) { return out.values[lhs] > out.values[rhs]; });
    std::vector<double> sorted(n);
    for (int i = 0; i < n; ++i) sorted[i] = out.values[order[i]];
    out.values = std::move(sorted);
    if (want_vectors) {
        out.vectors.resize(n);
        for (int i = 0; i < n; ++i) out.vectors[i] = v[order[i]];
    }
    return out;
}

/// Singular values via the symmetric eigendecomposition of T^t T, with
/// 1e-12 relative zero-clipping of the eigenvalues.
inline std::vector<double> singular_values(const HilbertOperator& op) {
    const int n = op.dim();
    HilbertOperator gram(n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (int k = 0; k < n; ++k) s += op(k, i) * op(k, j);
            gram(i, j) = s;
        }
    SymmetricEigen eig = symmetric_eigen(gram, /*want_vectors=*/false);
    const double clip = (eig.values.empty() ? 0.0 : std::abs(eig.values.front())) * 1e-12;
    std::vector<double> sv(eig.values.size());
    for (std::size_t i = 0; i < sv.size(); ++i)
        sv[i] = eig.values[i] > clip ? std::sqrt(eig.values[i]) : 0.0;
    return sv;
}

/// Nuclear norm tr|T| = sum of singular values. For symmetric PSD input it
/// reduces to the trace, and hs_norm(T) <= trace_norm(T) always.
inline double trace_norm(const HilbertOperator& op) {
    double s = 0.0;
    for (double sv : singular_values(op)) s += sv;
    return s;
}

/// A (x) B on the product space, kept factored. Row/column indices of the
/// materialized matrix are (a * dim_b + b).
struct TensorOperator {
    HilbertOperator factor_a;
    HilbertOperator factor_b;

    int dim() const { return factor_a.dim() * factor_b.dim(); }

    double entry(int row_a, int row_b, int col_a, int col_b) const {
        return factor_a(row_a, col_a) * factor_b(row_b, col_b);
    }

    HilbertOperator materialize() const {
        const int db = factor_b.dim();
        HilbertOperator out(dim());
        for (int ia = 0; ia < factor_a.dim(); ++ia)
            for (int ib = 0; ib < db; ++ib)
                for (int ja = 0; ja < factor_a.dim(); ++ja)
                    for (int jb = 0; jb < db; ++jb)
                        out(ia * db + ib, ja * db + jb) = entry(ia, ib, ja, jb);
        return out;
    }
};

// <x1 (x) y1, x2 (x) y2> = <x1,x2><y1,y2> makes the HS norm multiplicative
// across tensor factors; tensor_hs_norm avoids ever materializing the product.
inline double tensor_hs_norm(const HilbertOperator& a, const HilbertOperator& b) {
    return hs_norm(a) * hs_norm(b);
}

inline double hs_norm(const TensorOperator& t) {
    return tensor_hs_norm(t.factor_a, t.factor_b);
}

// --- serialization -------------------------------------------------------

inline void write_csv(const HilbertOperator& op, std::ostream& out) {
    out << "# hilbert-operator dim=" << op.dim() << "\n";
    char buf[32];
    for (int i = 0; i < op.dim(); ++i) {
        for (int j = 0; j < op.dim(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", op(i, j));
            out << buf << (j + 1 == op.dim() ? "" : ",");
        }
        out << "\n";
    }
}

inline HilbertOperator read_csv_operator(std::istream& in) {
    std::string header;
    std::getline(in, header);
    const std::string tag = "# hilbert-operator dim=";
    if (header.rfind(tag, 0) != 0)
        throw std::runtime_error("operator CSV: missing header line");
    const int dim = std::stoi(header.substr(tag.size()));
    HilbertOperator op(dim);
    std::string line;
    for (int i = 0; i < dim; ++i) {
        if (!std::getline(in, line)) throw std::runtime_error("operator CSV: truncated");
        std::istringstream row(line);
        std::string cell;
        for (int j = 0; j < dim; ++j) {
            if (!std::getline(row, cell, ',')) throw std::runtime_error("operator CSV: short row");
            op(i, j) = std::stod(cell);
        }
    }
    return op;
}

inline nlohmann::json to_json(const HilbertOperator& op) {
    nlohmann::json rows = nlohmann::json::array();
    for (int i = 0; i < op.dim(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (int j = 0; j < op.dim(); ++j) row.push_back(op(i, j));
        rows.push_back(std::move(row));
    }
    return nlohmann::json{{"dim", op.dim()}, {"entries", std::move(rows)}};
}

inline HilbertOperator operator_from_json(const nlohmann::json& j) {
    const int dim = j.at("dim").get<int>();
    HilbertOperator op(dim);
    const auto& rows = j.at("entries");
    if (static_cast<int>(rows.size()) != dim)
        throw std::runtime_error("operator JSON: row count mismatch");
    for (int i = 0; i < dim; ++i)
        for (int j2 = 0; j2 < dim; ++j2) op(i, j2) = rows[i][j2].get<double>();
    return op;
}

}  // namespace hsclt

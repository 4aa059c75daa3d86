#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "spinml/errors.hpp"

namespace spinml {

// Dense row-major matrix of doubles. Deliberately minimal: the library only
// needs square symmetric matrices plus a few constructions.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    double& operator()(std::size_t i, std::size_t j) {
        return data_[i * cols_ + j];
    }
    double operator()(std::size_t i, std::size_t j) const {
        return data_[i * cols_ + j];
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool square() const noexcept { return rows_ == cols_; }

    double* row(std::size_t i) { return data_.data() + i * cols_; }
    const double* row(std::size_t i) const { return data_.data() + i * cols_; }

    std::vector<double>& data() noexcept { return data_; }
    const std::vector<double>& data() const noexcept { return data_; }

    double trace() const {
        double t = 0.0;
        for (std::size_t i = 0; i < std::min(rows_, cols_); ++i) t += (*this)(i, i);
        return t;
    }

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline double max_symmetry_defect(const Matrix& m) {
    double defect = 0.0;
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = i + 1; j < m.cols(); ++j)
            defect = std::max(defect, std::fabs(m(i, j) - m(j, i)));
    return defect;
}

// All eigenvalues of a real symmetric matrix, descending.
struct SymmetricSpectrum {
    std::vector<double> eigenvalues;

    double sum() const {
        double s = 0.0;
        for (double v : eigenvalues) s += v;
        return s;
    }
    double abs_sum() const {
        double s = 0.0;
        for (double v : eigenvalues) s += std::fabs(v);
        return s;
    }
    double min() const { return eigenvalues.empty() ? 0.0 : eigenvalues.back(); }
};

namespace detail {

// Householder reduction of a symmetric matrix to tridiagonal form,
// eigenvalues-only variant. On exit d holds the diagonal and e the
// subdiagonal (e[0] unused).
inline void householder_tridiagonalize(std::vector<double>& a, int n,
                                       std::vector<double>& d,
                                       std::vector<double>& e) {
    auto A = [&](int i, int j) -> double& { return a[std::size_t(i) * n + j]; };
    for (int i = n - 1; i >= 1; --i) {
        const int l = i - 1;
        double h = 0.0;
        double scale = 0.0;
        if (l > 0) {
            for (int k = 0; k <= l; ++k) scale += std::fabs(A(i, k));
            if (scale == 0.0) {
                e[i] = A(i, l);
            } else {
                for (int k = 0; k <= l; ++k) {
                    A(i, k) /= scale;
                    h += A(i, k) * A(i, k);
                }
                double f = A(i, l);
                double g = (f >= 0.0) ? -std::sqrt(h) : std::sqrt(h);
                e[i] = scale * g;
                h -= f * g;
                A(i, l) = f - g;
                f = 0.0;
                for (int j = 0; j <= l; ++j) {
                    g = 0.0;
                    for (int k = 0; k <= j; ++k) g += A(j, k) * A(i, k);
                    for (int k = j + 1; k <= l; ++k) g += A(k, j) * A(i, k);
                    e[j] = g / h;
                    f += e[j] * A(i, j);
                }
                const double hh = f / (h + h);
                for (int j = 0; j <= l; ++j) {
                    f = A(i, j);
                    g = e[j] - hh * f;
                    e[j] = g;
                    for (int k = 0; k <= j; ++k)
                        A(j, k) -= f * e[k] + g * A(i, k);
                }
            }
        } else {
            e[i] = A(i, l);
        }
        d[i] = h;
    }
    e[0] = 0.0;
    for (int i = 0; i < n; ++i) d[i] = A(i, i);
}

// Implicit-shift QL iteration on a symmetric tridiagonal matrix,
// eigenvalues only. d/e as produced by householder_tridiagonalize.
inline void tridiagonal_ql(std::vector<double>& d, std::vector<double>& e,
                           int n) {
    constexpr double eps = std::numeric_limits<double>::epsilon();
    for (int i = 1; i < n; ++i) e[i - 1] = e[i];
    e[n - 1] = 0.0;
    // Deflation floor at the matrix scale. The purely local test below never
    // fires inside a long run of noise-sized diagonals (low-rank input, e.g.
    // partial transposes of sparse states), and the iteration stalls there.
    // Zeroing a subdiagonal entry perturbs eigenvalues by at most that entry,
    // so anything under eps * scale is already below attainable accuracy.
    double anorm = 0.0;
    for (int i = 0; i < n; ++i) {
        double row = std::fabs(d[i]) + std::fabs(e[i]);
        if (i > 0) row += std::fabs(e[i - 1]);
        anorm = std::max(anorm, row);
    }
    const double floor_tol = eps * anorm;
    for (int l = 0; l < n; ++l) {
        int iter = 0;
        int m = 0;
        do {
            for (m = l; m < n - 1; ++m) {
                const double dd = std::fabs(d[m]) + std::fabs(d[m + 1]);
                if (std::fabs(e[m]) <= eps * dd ||
                    std::fabs(e[m]) <= floor_tol)
                    break;
            }
            if (m != l) {
                if (iter++ == 60)
                    throw ContractError(
                        "symmetric_eigenvalues: QL iteration failed to "
                        "converge");
                double g = (d[l + 1] - d[l]) / (2.0 * e[l]);
                double r = std::hypot(g, 1.0);
                g = d[m] - d[l] + e[l] / (g + std::copysign(r, g));
                double s = 1.0;
                double c = 1.0;
                double p = 0.0;
                int i = m - 1;
                for (; i >= l; --i) {
                    double f = s * e[i];
                    const double b = c * e[i];
                    r = std::hypot(f, g);
                    e[i + 1] = r;
                    if (r == 0.0) {
                        d[i + 1] -= p;
                        e[m] = 0.0;
                        break;
                    }
                    s = f / r;
                    c = g / r;
                    g = d[i + 1] - p;
                    f = (d[i] - g) * s + 2.0 * c * b;
                    p = s * f;
                    d[i + 1] = g + p;
                    g = c * f - b;
                }
                if (r == 0.0 && i >= l) continue;
                d[l] -= p;
                e[l] = g;
                e[m] = 0.0;
            }
        } while (m != l);
    }
}

}  // namespace detail

// Eigenvalues of a real symmetric matrix via Householder tridiagonalization
// followed by implicit-shift QL, returned in descending order. Input must be
// symmetric within symmetry_tol.
inline SymmetricSpectrum symmetric_eigenvalues(const Matrix& m,
                                               double symmetry_tol = 1e-10) {
    if (!m.square())
        throw ContractError(detail::cat("symmetric_eigenvalues: matrix is ",
                                        m.rows(), "x", m.cols(),
                                        ", expected square"));
    const double defect = max_symmetry_defect(m);
    if (defect > symmetry_tol)
        throw ContractError(
            detail::cat("symmetric_eigenvalues: symmetry defect ", defect,
                        " exceeds tolerance ", symmetry_tol));
    const int n = static_cast<int>(m.rows());
    SymmetricSpectrum spec;
    if (n == 0) return spec;
    if (n == 1) {
        spec.eigenvalues = {m(0, 0)};
        return spec;
    }
    std::vector<double> a = m.data();
    std::vector<double> d(n, 0.0);
    std::vector<double> e(n, 0.0);
    detail::householder_tridiagonalize(a, n, d, e);
    detail::tridiagonal_ql(d, e, n);
    std::sort(d.begin(), d.end(), std::greater<double>());
    spec.eigenvalues = std::move(d);
    return spec;
}

}  // namespace spinml

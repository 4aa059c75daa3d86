#pragma once

#include <cmath>
#include <cstdlib>
#include <numbers>
#include <string>
#include <vector>

#include "spinml/errors.hpp"
#include "spinml/linalg.hpp"
#include "spinml/rng.hpp"

namespace spinml {

// Half-integer spin quantum number j >= 1/2, stored as 2j to keep the
// arithmetic exact. Subsystem dimension is D = 2j + 1.
class HalfInt {
public:
    static HalfInt from_twice(int twice) {
        if (twice < 1)
            throw ParameterError(
                detail::cat("spin must be >= 1/2, got 2j = ", twice));
        return HalfInt(twice);
    }

    // Accepts decimal spins on the half-integer grid: "0.5", "1", "2.5", "5".
    static HalfInt parse(const std::string& text) {
        char* end = nullptr;
        const double v = std::strtod(text.c_str(), &end);
        if (end == text.c_str() || *end != '\0')
            throw ParameterError(detail::cat("invalid spin value '", text, "'"));
        return from_value(v);
    }

    static HalfInt from_value(double j) {
        const double twice = 2.0 * j;
        const double rounded = std::round(twice);
        if (std::fabs(twice - rounded) > 1e-9)
            throw ParameterError(
                detail::cat("spin must be a half-integer, got ", j));
        return from_twice(static_cast<int>(rounded));
    }

    int twice() const noexcept { return twice_; }
    int dimension() const noexcept { return twice_ + 1; }
    double value() const noexcept { return 0.5 * twice_; }

    std::string str() const {
        if (twice_ % 2 == 0) return std::to_string(twice_ / 2);
        return std::to_string(twice_ / 2) + ".5";
    }

    auto operator<=>(const HalfInt&) const = default;

private:
    explicit HalfInt(int twice) : twice_(twice) {}
    int twice_;
};

// Bipartite spin pair (j1, j2) with subsystem dimensions d1 = 2*j1+1,
// d2 = 2*j2+1 and composite amplitude count d1*d2.
struct SpinPair {
    HalfInt j1;
    HalfInt j2;

    static SpinPair equal(HalfInt j) { return SpinPair{j, j}; }

    int d1() const noexcept { return j1.dimension(); }
    int d2() const noexcept { return j2.dimension(); }
    int amplitude_count() const noexcept { return d1() * d2(); }

    // Row-major composite index of (m, n): m outer over -j1..j1, n inner
    // over -j2..j2, both in half-integer steps.
    int index_of(int m_twice, int n_twice) const {
        const int a = (m_twice + j1.twice()) / 2;
        const int b = (n_twice + j2.twice()) / 2;
        return a * d2() + b;
    }

    bool operator==(const SpinPair&) const = default;
};

// Real amplitude vector C_mn over the product basis, unit Euclidean norm.
struct PureState {
    SpinPair pair;
    std::vector<double> amplitudes;

    double norm() const {
        double s = 0.0;
        for (double a : amplitudes) s += a * a;
        return std::sqrt(s);
    }
};

// Real symmetric, unit-trace, positive semidefinite matrix on the composite
// Hilbert space. Generators keep the invariants by construction; validate()
// re-checks them (the PSD check costs an eigensolve, so it is used by tests
// and loaders rather than on every construction).
struct DensityOperator {
    SpinPair pair;
    Matrix matrix;

    void validate() const {
        const std::size_t d = static_cast<std::size_t>(pair.amplitude_count());
        if (matrix.rows() != d || matrix.cols() != d)
            throw ContractError(detail::cat(
                "density operator is ", matrix.rows(), "x", matrix.cols(),
                ", expected ", d, "x", d));
        const double defect = max_symmetry_defect(matrix);
        if (defect > 1e-12)
            throw ContractError(
                detail::cat("density operator symmetry defect ", defect));
        if (std::fabs(matrix.trace() - 1.0) > 1e-10)
            throw ContractError(
                detail::cat("density operator trace ", matrix.trace()));
        const SymmetricSpectrum spec = symmetric_eigenvalues(matrix);
        if (spec.min() < -1e-9)
            throw ContractError(
                detail::cat("density operator min eigenvalue ", spec.min()));
    }
};

namespace detail {

inline PureState normalized_state(SpinPair pair, std::vector<double> amps) {
    double s = 0.0;
    for (double a : amps) s += a * a;
    const double norm = std::sqrt(s);
    for (double& a : amps) a /= norm;
    return PureState{pair, std::move(amps)};
}

inline bool degenerate_draw(const std::vector<double>& amps) {
    for (double a : amps)
        if (std::fabs(a) > 1e-300) return false;
    return true;
}

}  // namespace detail

// Dense Gaussian random pure state: every amplitude i.i.d. N(0,1), then the
// vector is normalized. A degenerate all-tiny draw is redrawn; eight failures
// in a row indicate a broken RNG stream.
inline PureState random_pure_state(const SpinPair& pair, RngHandle& rng) {
    const int n = pair.amplitude_count();
    for (int attempt = 0; attempt < 8; ++attempt) {
        std::vector<double> amps(static_cast<std::size_t>(n));
        for (double& a : amps) a = rng.normal();
        if (detail::degenerate_draw(amps)) continue;
        return detail::normalized_state(pair, std::move(amps));
    }
    throw ContractError("random_pure_state: degenerate draws persisted after 8 attempts (RNG fault)");
}

// Sparse state: exactly k nonzero amplitudes at distinct uniformly chosen
// indices, values i.i.d. N(0,1), then normalized.
inline PureState sparse_pure_state(const SpinPair& pair, int k, RngHandle& rng) {
    const int n = pair.amplitude_count();
    if (k < 1 || k > n)
        throw ParameterError(
            detail::cat("sparse_pure_state: k = ", k, " outside [1, ", n, "]"));
    for (int attempt = 0; attempt < 8; ++attempt) {
        const auto idx = rng.sample_indices(static_cast<std::size_t>(k),
                                            static_cast<std::size_t>(n));
        std::vector<double> amps(static_cast<std::size_t>(n), 0.0);
        std::vector<double> values(static_cast<std::size_t>(k));
        bool degenerate = true;
        for (double& v : values) {
            v = rng.normal();
            if (std::fabs(v) > 1e-300) degenerate = false;
        }
        if (degenerate) continue;
        for (int i = 0; i < k; ++i) amps[idx[static_cast<std::size_t>(i)]] = values[static_cast<std::size_t>(i)];
        return detail::normalized_state(pair, std::move(amps));
    }
    throw ContractError("sparse_pure_state: degenerate draws persisted after 8 attempts (RNG fault)");
}

// Tunable two-term state cos(theta)|-j,-j> + sin(theta)|j,j>; separable at
// theta = 0 and pi/2, maximally entangled at pi/4.
inline PureState zeta_state(HalfInt j, double theta) {
    if (theta < 0.0 || theta > std::numbers::pi / 2.0 + 1e-15)
        throw ParameterError(
            detail::cat("zeta_state: theta = ", theta, " outside [0, pi/2]"));
    const SpinPair pair = SpinPair::equal(j);
    std::vector<double> amps(static_cast<std::size_t>(pair.amplitude_count()), 0.0);
    amps.front() = std::cos(theta);
    amps.back() = std::sin(theta);
    return PureState{pair, std::move(amps)};
}

// Maximally entangled |phi> = 1/sqrt(D) * sum_k |k,k>.
inline PureState max_entangled_phi(HalfInt j) {
    const SpinPair pair = SpinPair::equal(j);
    const int d = j.dimension();
    std::vector<double> amps(static_cast<std::size_t>(pair.amplitude_count()), 0.0);
    const double w = 1.0 / std::sqrt(static_cast<double>(d));
    for (int k = 0; k < d; ++k)
        amps[static_cast<std::size_t>(k * d + k)] = w;
    return PureState{pair, std::move(amps)};
}

// rho = |psi><psi| for a normalized pure state.
inline DensityOperator density_from_pure(const PureState& state) {
    const double norm = state.norm();
    if (std::fabs(norm - 1.0) > 1e-9)
        throw ContractError(
            detail::cat("density_from_pure: state norm ", norm, " is not 1"));
    const std::size_t d = state.amplitudes.size();
    Matrix m(d, d);
    for (std::size_t i = 0; i < d; ++i) {
        const double ai = state.amplitudes[i];
        if (ai == 0.0) continue;
        double* row = m.row(i);
        for (std::size_t j = 0; j < d; ++j) row[j] = ai * state.amplitudes[j];
    }
    return DensityOperator{state.pair, std::move(m)};
}

// Werner mixture alpha*|phi><phi| + (1-alpha)/D^2 * I on the D^2-dimensional
// composite space.
inline DensityOperator werner_state(HalfInt j, double alpha) {
    if (alpha < 0.0 || alpha > 1.0)
        throw ParameterError(
            detail::cat("werner_state: alpha = ", alpha, " outside [0, 1]"));
    const int d = j.dimension();
    const std::size_t dim = static_cast<std::size_t>(d) * static_cast<std::size_t>(d);
    Matrix m(dim, dim);
    const double mixed = (1.0 - alpha) / static_cast<double>(dim);
    for (std::size_t i = 0; i < dim; ++i) m(i, i) = mixed;
    const double pure = alpha / static_cast<double>(d);
    for (int k = 0; k < d; ++k)
        for (int l = 0; l < d; ++l)
            m(static_cast<std::size_t>(k * d + k),
              static_cast<std::size_t>(l * d + l)) += pure;
    return DensityOperator{SpinPair::equal(j), std::move(m)};
}

}  // namespace spinml

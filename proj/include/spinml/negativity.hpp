#pragma once

#include <algorithm>
#include <cmath>

#include "spinml/errors.hpp"
#include "spinml/linalg.hpp"
#include "spinml/states.hpp"

namespace spinml {

// Partial transpose over the second subsystem: with composite indices
// (m, n) -> m * d2 + n, the element map is
//   PT[(mr,nr),(mc,nc)] = rho[(mr,nc),(mc,nr)].
// Equivalently, each d2 x d2 block of the d1 x d1 block structure is
// transposed in place. Real symmetric input gives real symmetric output.
inline Matrix partial_transpose(const DensityOperator& rho) {
    const int d1 = rho.pair.d1();
    const int d2 = rho.pair.d2();
    const std::size_t dim = static_cast<std::size_t>(d1) * static_cast<std::size_t>(d2);
    if (rho.matrix.rows() != dim || rho.matrix.cols() != dim)
        throw ContractError(detail::cat(
            "partial_transpose: matrix is ", rho.matrix.rows(), "x",
            rho.matrix.cols(), " but spin pair needs ", dim, "x", dim));
    Matrix pt(dim, dim);
    for (int mr = 0; mr < d1; ++mr)
        for (int mc = 0; mc < d1; ++mc)
            for (int nr = 0; nr < d2; ++nr)
                for (int nc = 0; nc < d2; ++nc)
                    pt(static_cast<std::size_t>(mr * d2 + nr),
                       static_cast<std::size_t>(mc * d2 + nc)) =
                        rho.matrix(static_cast<std::size_t>(mr * d2 + nc),
                                   static_cast<std::size_t>(mc * d2 + nr));
    const double defect = max_symmetry_defect(pt);
    if (defect > 1e-12)
        throw ContractError(
            detail::cat("partial_transpose: output symmetry defect ", defect));
    return pt;
}

struct NegativityValue {
    double value;
    int d1;
    int d2;

    // N <= (min(d1,d2) - 1) / 2 for any state on d1 x d2.
    double upper_bound() const {
        return 0.5 * (std::min(d1, d2) - 1);
    }
};

// Negativity N(rho) = (||rho^PT||_1 - 1) / 2 = sum of |negative eigenvalues|
// of the partial transpose (the PT is unit-trace, so positive and negative
// parts balance around 1).
inline NegativityValue negativity(const DensityOperator& rho) {
    const Matrix pt = partial_transpose(rho);
    const SymmetricSpectrum spec = symmetric_eigenvalues(pt);
    double raw = 0.5 * (spec.abs_sum() - spec.sum());
    if (raw < 0.0) {
        if (raw < -1e-10)
            throw ContractError(
                detail::cat("negativity: negative-part sum ", raw));
        raw = 0.0;
    }
    NegativityValue out{raw, rho.pair.d1(), rho.pair.d2()};
    if (raw > out.upper_bound() + 1e-9)
        throw ContractError(detail::cat(
            "negativity: ", raw, " exceeds bound ", out.upper_bound(),
            " for ", out.d1, "x", out.d2));
    return out;
}

// Werner mixture on D x D: the partial transpose has eigenvalues
// alpha/D + (1-alpha)/D^2 with multiplicity D(D+1)/2 and
// -alpha/D + (1-alpha)/D^2 with multiplicity D(D-1)/2, giving
//   N = max(0, (D-1)/(2D) * (alpha (D+1) - 1)),
// which crosses zero at alpha = 1/(D+1).
inline double werner_negativity_closed_form(HalfInt j, double alpha) {
    if (alpha < 0.0 || alpha > 1.0)
        throw ParameterError(
            detail::cat("werner negativity: alpha = ", alpha, " outside [0, 1]"));
    const double d = static_cast<double>(j.dimension());
    const double n = (d - 1.0) / (2.0 * d) * (alpha * (d + 1.0) - 1.0);
    return std::max(0.0, n);
}

inline double werner_alpha_threshold(HalfInt j) {
    return 1.0 / (j.dimension() + 1.0);
}

// Two-term state cos(theta)|-j,-j> + sin(theta)|j,j>:
// N = |sin(theta) cos(theta)|, independent of j.
inline double zeta_negativity_closed_form(double theta) {
    return std::fabs(std::sin(theta) * std::cos(theta));
}

}  // namespace spinml

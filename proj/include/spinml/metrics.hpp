#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "spinml/errors.hpp"

namespace spinml {

struct MetricsReport {
    double mse = 0.0;
    double mae = 0.0;
    double r2 = 0.0;
    std::size_t n = 0;
    // Set when the actuals are constant, where R^2 has no variance to explain.
    // r2 is then 1 for a perfect fit and -inf otherwise.
    bool degenerate = false;
};

inline MetricsReport compute_metrics(const std::vector<double>& actual,
                                     const std::vector<double>& predicted) {
    if (actual.empty())
        throw ParameterError("compute_metrics: empty input");
    if (actual.size() != predicted.size())
        throw ParameterError(detail::cat("compute_metrics: ", actual.size(),
                                         " actual vs ", predicted.size(),
                                         " predicted"));
    const std::size_t n = actual.size();
    double mse = 0.0, mae = 0.0, mean = 0.0;
    double lo = actual[0], hi = actual[0];
    for (std::size_t i = 0; i < n; ++i) {
        const double r = predicted[i] - actual[i];
        mse += r * r;
        mae += std::fabs(r);
        mean += actual[i];
        lo = std::min(lo, actual[i]);
        hi = std::max(hi, actual[i]);
    }
    mse /= static_cast<double>(n);
    mae /= static_cast<double>(n);
    mean /= static_cast<double>(n);

    MetricsReport rep;
    rep.mse = mse;
    rep.mae = mae;
    rep.n = n;
    if (lo == hi) {
        rep.degenerate = true;
        rep.r2 = mse == 0.0 ? 1.0 : -std::numeric_limits<double>::infinity();
        return rep;
    }
    double ss_tot = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        ss_tot += (actual[i] - mean) * (actual[i] - mean);
    rep.r2 = 1.0 - mse * static_cast<double>(n) / ss_tot;
    return rep;
}

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
};

// Ordinary least squares of predicted on actual, for predicted-vs-actual
// scatter diagnostics.
inline LineFit line_fit(const std::vector<double>& actual,
                        const std::vector<double>& predicted) {
    if (actual.size() != predicted.size())
        throw ParameterError(detail::cat("line_fit: ", actual.size(),
                                         " actual vs ", predicted.size(),
                                         " predicted"));
    if (actual.size() < 2)
        throw ParameterError("line_fit: need at least 2 points");
    const std::size_t n = actual.size();
    double mean_a = 0.0, mean_p = 0.0;
    double lo = actual[0], hi = actual[0];
    for (std::size_t i = 0; i < n; ++i) {
        mean_a += actual[i];
        mean_p += predicted[i];
        lo = std::min(lo, actual[i]);
        hi = std::max(hi, actual[i]);
    }
    if (lo == hi)
        throw DataError("line_fit: actuals are constant, fit is degenerate");
    mean_a /= static_cast<double>(n);
    mean_p /= static_cast<double>(n);
    double cov = 0.0, var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        cov += (actual[i] - mean_a) * (predicted[i] - mean_p);
        var += (actual[i] - mean_a) * (actual[i] - mean_a);
    }
    LineFit fit;
    fit.slope = cov / var;
    fit.intercept = mean_p - fit.slope * mean_a;
    return fit;
}

// Coefficients of the empirical sample-size relationship
// log10(S) = c0 + cJ*j + cMSE*mse + cMAE*mae + cR2*r2, defaulted to the
// published fit.
struct ScalingCoefficients {
    double c0 = 2.8;
    double cJ = 0.502;
    double cMSE = -3.042;
    double cMAE = -8.012;
    double cR2 = 1.012;
};

inline double scaling_estimate(double j, double mse, double mae, double r2,
                               const ScalingCoefficients& c = {}) {
    return std::pow(10.0, c.c0 + c.cJ * j + c.cMSE * mse + c.cMAE * mae +
                              c.cR2 * r2);
}

struct ScalingRecord {
    double j = 0.0;
    double mse = 0.0;
    double mae = 0.0;
    double r2 = 0.0;
    double samples = 0.0;
};

// Refit the scaling relationship from observed runs: OLS of log10(samples)
// on (1, j, mse, mae, r2) via the normal equations. Tiny system, so Cholesky
// with a ridge fallback is plenty; a collapsed pivot means the named column
// is a linear combination of the ones before it.
inline ScalingCoefficients fit_scaling_law(const std::vector<ScalingRecord>& records) {
    constexpr std::size_t k = 5;
    static const std::array<const char*, k> names{"intercept", "j", "mse",
                                                  "mae", "r2"};
    if (records.size() < k)
        throw DataError(detail::cat("fit_scaling_law: ", records.size(),
                                    " records cannot determine ", k,
                                    " coefficients"));

    std::array<std::array<double, k>, k> a{};
    std::array<double, k> b{};
    for (const ScalingRecord& r : records) {
        if (!(r.samples > 0.0))
            throw ParameterError(detail::cat(
                "fit_scaling_law: sample count ", r.samples, " must be positive"));
        const std::array<double, k> row{1.0, r.j, r.mse, r.mae, r.r2};
        const double z = std::log10(r.samples);
        for (std::size_t i = 0; i < k; ++i) {
            for (std::size_t j2 = 0; j2 <= i; ++j2) a[i][j2] += row[i] * row[j2];
            b[i] += row[i] * z;
        }
    }
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j2 = i + 1; j2 < k; ++j2) a[i][j2] = a[j2][i];

    // Cholesky with per-column relative pivot tracking. scale[i] is the
    // squared norm of regressor column i, the natural yardstick for its pivot.
    auto factor = [&](double ridge, std::array<std::array<double, k>, k>& l,
                      std::vector<std::string>& collinear, bool& fragile) {
        collinear.clear();
        fragile = false;
        for (std::size_t i = 0; i < k; ++i)
            for (std::size_t j2 = 0; j2 < k; ++j2) l[i][j2] = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            const double scale = a[i][i] + ridge;
            double d = scale;
            for (std::size_t j2 = 0; j2 < i; ++j2) d -= l[i][j2] * l[i][j2];
            const double rel = scale > 0.0 ? d / scale : 0.0;
            if (!(rel > 1e-12)) {
                collinear.emplace_back(names[i]);
                continue;  // leave the row zero; later pivots see the drop
            }
            if (rel <= 1e-6) fragile = true;
            l[i][i] = std::sqrt(d);
            for (std::size_t r = i + 1; r < k; ++r) {
                double s = a[r][i];
                for (std::size_t j2 = 0; j2 < i; ++j2) s -= l[r][j2] * l[i][j2];
                l[r][i] = s / l[i][i];
            }
        }
    };

    std::array<std::array<double, k>, k> l{};
    std::vector<std::string> collinear;
    bool fragile = false;
    factor(0.0, l, collinear, fragile);
    if (!collinear.empty()) {
        std::string msg = "fit_scaling_law: collinear regressors:";
        for (const std::string& c : collinear) msg += " " + c;
        throw DataError(msg);
    }
    if (fragile) {
        factor(1e-10, l, collinear, fragile);
        if (!collinear.empty())
            throw DataError("fit_scaling_law: normal equations singular even "
                            "with ridge");
    }

    std::array<double, k> u{};
    for (std::size_t i = 0; i < k; ++i) {
        double s = b[i];
        for (std::size_t j2 = 0; j2 < i; ++j2) s -= l[i][j2] * u[j2];
        u[i] = s / l[i][i];
    }
    std::array<double, k> c{};
    for (std::size_t i = k; i-- > 0;) {
        double s = u[i];
        for (std::size_t j2 = i + 1; j2 < k; ++j2) s -= l[j2][i] * c[j2];
        c[i] = s / l[i][i];
    }
    return ScalingCoefficients{c[0], c[1], c[2], c[3], c[4]};
}

}  // namespace spinml

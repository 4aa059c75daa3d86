#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "spinml/errors.hpp"
#include "spinml/metrics.hpp"
#include "spinml/rng.hpp"

using namespace spinml;

TEST_CASE("metrics on hand-worked cases") {
    const auto perfect = compute_metrics({1, 2, 3}, {1, 2, 3});
    REQUIRE(perfect.mse == 0.0);
    REQUIRE(perfect.mae == 0.0);
    REQUIRE(perfect.r2 == 1.0);
    REQUIRE(perfect.n == 3);
    REQUIRE_FALSE(perfect.degenerate);

    const auto off = compute_metrics({0, 1}, {1, 1});
    REQUIRE(off.mse == Catch::Approx(0.5));
    REQUIRE(off.mae == Catch::Approx(0.5));
    REQUIRE(off.r2 == Catch::Approx(-1.0));

    // Predicting the mean of the actuals explains nothing.
    const auto mean_only = compute_metrics({1, 2, 3, 6}, {3, 3, 3, 3});
    REQUIRE(mean_only.r2 == Catch::Approx(0.0).margin(1e-15));
}

TEST_CASE("constant actuals are flagged instead of dividing by zero") {
    const auto exact = compute_metrics({2, 2, 2}, {2, 2, 2});
    REQUIRE(exact.degenerate);
    REQUIRE(exact.r2 == 1.0);

    const auto miss = compute_metrics({2, 2, 2}, {2, 2, 3});
    REQUIRE(miss.degenerate);
    REQUIRE(miss.r2 == -std::numeric_limits<double>::infinity());

    REQUIRE_THROWS_AS(compute_metrics({}, {}), ParameterError);
    REQUIRE_THROWS_AS(compute_metrics({1, 2}, {1}), ParameterError);
}

TEST_CASE("mean absolute error squared never exceeds mean squared error") {
    RngHandle rng(501);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> a(50), p(50);
        for (std::size_t i = 0; i < 50; ++i) {
            a[i] = rng.normal();
            p[i] = rng.normal();
        }
        const auto rep = compute_metrics(a, p);
        REQUIRE(rep.mae * rep.mae <= rep.mse + 1e-12);
    }
}

TEST_CASE("r-squared ignores a common shift of both series") {
    RngHandle rng(511);
    std::vector<double> a(40), p(40), a_s(40), p_s(40);
    for (std::size_t i = 0; i < 40; ++i) {
        a[i] = rng.normal();
        p[i] = a[i] + 0.1 * rng.normal();
        a_s[i] = a[i] + 10.5;
        p_s[i] = p[i] + 10.5;
    }
    REQUIRE(compute_metrics(a, p).r2 ==
            Catch::Approx(compute_metrics(a_s, p_s).r2).margin(1e-9));
}

TEST_CASE("scatter line fit on exact lines") {
    const std::vector<double> a{0, 1, 2, 3, 4};
    const auto ident = line_fit(a, a);
    REQUIRE(ident.slope == Catch::Approx(1.0));
    REQUIRE(ident.intercept == Catch::Approx(0.0).margin(1e-14));

    std::vector<double> p(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) p[i] = 2.0 * a[i] + 1.0;
    const auto affine = line_fit(a, p);
    REQUIRE(affine.slope == Catch::Approx(2.0));
    REQUIRE(affine.intercept == Catch::Approx(1.0));

    REQUIRE_THROWS_AS(line_fit({1}, {1}), ParameterError);
    REQUIRE_THROWS_AS(line_fit({3, 3, 3}, {1, 2, 3}), DataError);
    REQUIRE_THROWS_AS(line_fit({1, 2}, {1, 2, 3}), ParameterError);
}

TEST_CASE("line fit residuals are orthogonal to the actuals") {
    RngHandle rng(521);
    std::vector<double> a(60), p(60);
    for (std::size_t i = 0; i < 60; ++i) {
        a[i] = rng.uniform(0.0, 2.0);
        p[i] = 1.5 * a[i] - 0.3 + 0.2 * rng.normal();
    }
    const auto fit = line_fit(a, p);
    double dot = 0.0;
    for (std::size_t i = 0; i < 60; ++i)
        dot += (p[i] - fit.slope * a[i] - fit.intercept) * a[i];
    REQUIRE(std::fabs(dot) <= 1e-9);
}

TEST_CASE("sample-size estimate reproduces the published working points") {
    REQUIRE(scaling_estimate(0.5, 0.0, 0.002, 0.9999) ==
            Catch::Approx(1.11e4).epsilon(0.01));
    REQUIRE(scaling_estimate(1.0, 0.0002, 0.0102, 0.9962) ==
            Catch::Approx(1.69e4).epsilon(0.01));
    REQUIRE(scaling_estimate(2.0, 0.1, 0.1, 0.5, ScalingCoefficients{0, 0, 0, 0, 0}) ==
            1.0);
}

TEST_CASE("sample-size estimate is monotone in each input") {
    const double base = scaling_estimate(1.0, 0.01, 0.05, 0.9);
    REQUIRE(scaling_estimate(1.5, 0.01, 0.05, 0.9) > base);
    REQUIRE(scaling_estimate(1.0, 0.02, 0.05, 0.9) < base);
    REQUIRE(scaling_estimate(1.0, 0.01, 0.06, 0.9) < base);
    REQUIRE(scaling_estimate(1.0, 0.01, 0.05, 0.95) > base);
}

TEST_CASE("refitting the law on noiseless synthetic runs recovers it exactly") {
    const ScalingCoefficients truth{3.1, 0.45, -2.5, -7.0, 0.9};
    RngHandle rng(531);
    std::vector<ScalingRecord> records;
    for (int i = 0; i < 12; ++i) {
        ScalingRecord r;
        r.j = 0.5 + 0.5 * static_cast<double>(i % 4);
        r.mse = rng.uniform(0.0, 0.05);
        r.mae = rng.uniform(0.0, 0.2);
        r.r2 = rng.uniform(0.5, 1.0);
        r.samples = scaling_estimate(r.j, r.mse, r.mae, r.r2, truth);
        records.push_back(r);
    }
    const ScalingCoefficients fit = fit_scaling_law(records);
    REQUIRE(fit.c0 == Catch::Approx(truth.c0).margin(1e-8));
    REQUIRE(fit.cJ == Catch::Approx(truth.cJ).margin(1e-8));
    REQUIRE(fit.cMSE == Catch::Approx(truth.cMSE).margin(1e-8));
    REQUIRE(fit.cMAE == Catch::Approx(truth.cMAE).margin(1e-8));
    REQUIRE(fit.cR2 == Catch::Approx(truth.cR2).margin(1e-8));
}

TEST_CASE("degenerate scaling refits are rejected with named columns") {
    std::vector<ScalingRecord> four(4, ScalingRecord{1, 0.1, 0.1, 0.9, 100});
    REQUIRE_THROWS_AS(fit_scaling_law(four), DataError);

    RngHandle rng(541);
    std::vector<ScalingRecord> same_j;
    for (int i = 0; i < 8; ++i) {
        ScalingRecord r;
        r.j = 1.0;  // constant column duplicates the intercept
        r.mse = rng.uniform(0.0, 0.1);
        r.mae = rng.uniform(0.0, 0.3);
        r.r2 = rng.uniform(0.4, 1.0);
        r.samples = 1000.0 + 100.0 * static_cast<double>(i);
        same_j.push_back(r);
    }
    REQUIRE_THROWS_WITH(fit_scaling_law(same_j),
                        Catch::Matchers::ContainsSubstring("j"));

    std::vector<ScalingRecord> tied = same_j;
    for (std::size_t i = 0; i < tied.size(); ++i) {
        tied[i].j = 0.5 * static_cast<double>(i);
        tied[i].mae = tied[i].mse;  // now mae is collinear instead
    }
    REQUIRE_THROWS_WITH(fit_scaling_law(tied),
                        Catch::Matchers::ContainsSubstring("mae"));

    std::vector<ScalingRecord> bad = same_j;
    bad[0].samples = 0.0;
    REQUIRE_THROWS_AS(fit_scaling_law(bad), ParameterError);
}

TEST_CASE("near-collinear regressors fall back to a ridge instead of failing") {
    RngHandle rng(551);
    std::vector<ScalingRecord> records;
    for (int i = 0; i < 10; ++i) {
        ScalingRecord r;
        r.j = 1.0 + 1e-4 * rng.uniform();  // nearly constant, not exactly
        r.mse = rng.uniform(0.0, 0.1);
        r.mae = rng.uniform(0.0, 0.3);
        r.r2 = rng.uniform(0.4, 1.0);
        r.samples = 500.0 * (1.0 + rng.uniform());
        records.push_back(r);
    }
    const ScalingCoefficients fit = fit_scaling_law(records);
    REQUIRE(std::isfinite(fit.c0));
    REQUIRE(std::isfinite(fit.cJ));
    REQUIRE(std::isfinite(fit.cMSE));
    REQUIRE(std::isfinite(fit.cMAE));
    REQUIRE(std::isfinite(fit.cR2));
}

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstddef>
#include <numbers>
#include <vector>

#include "spinml/errors.hpp"
#include "spinml/extra_trees.hpp"
#include "spinml/gbt.hpp"
#include "spinml/meta_gbt.hpp"
#include "spinml/rng.hpp"
#include "spinml/tree.hpp"
#include "support/oracles.hpp"

using namespace spinml;

TEST_CASE("hand-built tree evaluates, measures depth and counts leaves") {
    Tree t;
    t.nodes.resize(3);
    t.nodes[0].feature = 0;
    t.nodes[0].threshold = 0.5;
    t.nodes[0].left = 1;
    t.nodes[0].right = 2;
    t.nodes[1].value = -1.0;
    t.nodes[2].value = 1.0;

    const double lo = 0.2, hi = 0.9, edge = 0.5;
    REQUIRE(t.eval(&lo) == -1.0);
    REQUIRE(t.eval(&hi) == 1.0);
    REQUIRE(t.eval(&edge) == 1.0);  // threshold routes right
    REQUIRE(t.depth() == 1);
    REQUIRE(t.leaf_count() == 2);
}

TEST_CASE("split gain matches hand-worked values") {
    // Four rows, unit hessians, gradients summing to zero, balanced split.
    REQUIRE(gbt_split_gain(0.0, 4.0, 2.0, 2.0, 1.0, 0.0) ==
            Catch::Approx(4.0 / 3.0));
    // Sending everything left is worth exactly the split penalty.
    REQUIRE(gbt_split_gain(3.0, 5.0, 3.0, 5.0, 1.0, 0.25) ==
            Catch::Approx(-0.25));
    // Heavy regularization drives every gain toward -gamma.
    REQUIRE(gbt_split_gain(4.0, 6.0, 1.0, 2.0, 1e15, 0.125) ==
            Catch::Approx(-0.125).margin(1e-12));
}

TEST_CASE("split gain agrees with the objective-drop oracle on every split") {
    RngHandle rng(201);
    std::vector<double> grads(10);
    for (auto& g : grads) g = rng.normal();
    const double lambda = 1.3, gamma = 0.05;

    double g = 0.0, h = 0.0;
    for (double v : grads) {
        g += v;
        h += 1.0;
    }
    for (unsigned mask = 1; mask + 1 < (1u << 10); ++mask) {
        std::vector<bool> left(10);
        double g_l = 0.0, h_l = 0.0;
        for (std::size_t i = 0; i < 10; ++i) {
            left[i] = (mask >> i) & 1u;
            if (left[i]) {
                g_l += grads[i];
                h_l += 1.0;
            }
        }
        const double got = gbt_split_gain(g, h, g_l, h_l, lambda, gamma);
        const double want = oracle::split_gain_reference(grads, left, lambda, gamma);
        REQUIRE(std::fabs(got - want) <= 1e-12);
    }
}

TEST_CASE("variance reduction matches hand-worked values") {
    REQUIRE(variance_reduction({0, 0, 1, 1}, {true, true, false, false}) ==
            Catch::Approx(0.25));
    REQUIRE(variance_reduction({0, 1, 2, 3}, {true, true, false, false}) ==
            Catch::Approx(1.0));
    REQUIRE(variance_reduction({2, 2, 2, 2}, {true, false, true, false}) ==
            Catch::Approx(0.0).margin(1e-15));
    REQUIRE_THROWS_AS(variance_reduction({1, 2}, {true, true}), ContractError);
    REQUIRE_THROWS_AS(variance_reduction({1, 2, 3}, {true, true}), ContractError);
}

TEST_CASE("variance reduction agrees with the two-pass oracle on every split") {
    RngHandle rng(211);
    std::vector<double> y(10);
    for (auto& v : y) v = rng.normal();
    for (unsigned mask = 1; mask + 1 < (1u << 10); ++mask) {
        std::vector<bool> left(10);
        for (std::size_t i = 0; i < 10; ++i) left[i] = (mask >> i) & 1u;
        const double got = variance_reduction(y, left);
        const double want = oracle::variance_reduction_reference(y, left);
        REQUIRE(std::fabs(got - want) <= 1e-12);
    }
}

namespace {

Matrix column(const std::vector<double>& v) {
    Matrix x(v.size(), 1);
    for (std::size_t i = 0; i < v.size(); ++i) x(i, 0) = v[i];
    return x;
}

}  // namespace

TEST_CASE("boosting a constant target never grows past the base score") {
    Matrix x(50, 2);
    RngHandle rng(221);
    for (auto& v : x.data()) v = rng.normal();
    const std::vector<double> y(50, 5.0);

    GbtConfig cfg;
    cfg.n_estimators = 10;
    const GbtModel m = gbt_fit(x, y, cfg);
    REQUIRE(m.base_score == Catch::Approx(5.0));
    for (double p : m.predict(x)) REQUIRE(p == Catch::Approx(5.0).margin(1e-12));
    for (double l : m.train_mse_history) REQUIRE(l <= 1e-24);
}

TEST_CASE("boosting fits a step function tightly") {
    RngHandle rng(231);
    const std::size_t n = 200;
    std::vector<double> xs(n), ys(n);
    for (std::size_t i = 0; i < n; ++i) {
        xs[i] = rng.uniform();
        ys[i] = xs[i] < 0.5 ? 0.0 : 1.0;
    }
    const GbtModel m = gbt_fit(column(xs), ys, GbtConfig{});
    REQUIRE(m.train_mse_history.size() == GbtConfig{}.n_estimators + 1);

    // Probe everywhere except a small window around the jump, where the
    // learned threshold legitimately sits between training samples.
    double mse = 0.0;
    std::size_t cnt = 0;
    for (double t = 0.0025; t < 1.0; t += 0.005) {
        if (t > 0.48 && t < 0.52) continue;
        const double want = t < 0.5 ? 0.0 : 1.0;
        const double got = m.predict(column({t}))[0];
        mse += (got - want) * (got - want);
        ++cnt;
    }
    mse /= static_cast<double>(cnt);
    REQUIRE(mse <= 1e-3);
}

TEST_CASE("training error is monotone under boosting") {
    RngHandle rng(241);
    Matrix x(150, 3);
    std::vector<double> y(150);
    for (std::size_t i = 0; i < 150; ++i) {
        for (std::size_t j = 0; j < 3; ++j) x(i, j) = rng.normal();
        y[i] = std::sin(x(i, 0)) + 0.3 * x(i, 1) * x(i, 2);
    }
    GbtConfig cfg;
    cfg.n_estimators = 60;
    const GbtModel m = gbt_fit(x, y, cfg);
    for (std::size_t e = 1; e < m.train_mse_history.size(); ++e)
        REQUIRE(m.train_mse_history[e] <= m.train_mse_history[e - 1] + 1e-12);
}

TEST_CASE("a runaway learning rate raises a divergence error") {
    RngHandle rng(251);
    Matrix x(100, 2);
    std::vector<double> y(100);
    for (std::size_t i = 0; i < 100; ++i) {
        x(i, 0) = rng.normal();
        x(i, 1) = rng.normal();
        y[i] = x(i, 0);
    }
    GbtConfig cfg;
    cfg.learning_rate = 10.0;
    try {
        gbt_fit(x, y, cfg);
        FAIL("expected DivergenceError");
    } catch (const DivergenceError& e) {
        REQUIRE(e.iteration() >= 1);
        REQUIRE(std::string(e.what()).find("iteration") != std::string::npos);
    }
}

TEST_CASE("boosted trees respect the depth bound") {
    RngHandle rng(261);
    Matrix x(120, 2);
    std::vector<double> y(120);
    for (std::size_t i = 0; i < 120; ++i) {
        x(i, 0) = rng.normal();
        x(i, 1) = rng.normal();
        y[i] = x(i, 0) * x(i, 1);
    }
    GbtConfig cfg;
    cfg.max_depth = 3;
    cfg.n_estimators = 20;
    const GbtModel m = gbt_fit(x, y, cfg);
    for (const Tree& t : m.trees) {
        REQUIRE(t.depth() <= 3);
        REQUIRE(t.leaf_count() <= 8);
    }
}

TEST_CASE("feature-subsampled boosting is reproducible and still learns") {
    RngHandle rng(271);
    Matrix x(150, 4);
    std::vector<double> y(150);
    for (std::size_t i = 0; i < 150; ++i) {
        for (std::size_t j = 0; j < 4; ++j) x(i, j) = rng.normal();
        y[i] = 2.0 * x(i, 2);
    }
    GbtConfig cfg;
    cfg.features_per_split = 2;  // forces the node-wise sampled build path
    cfg.n_estimators = 150;
    cfg.seed = 7;
    const GbtModel a = gbt_fit(x, y, cfg);
    const GbtModel b = gbt_fit(x, y, cfg);
    const std::vector<double> pa = a.predict(x), pb = b.predict(x);
    REQUIRE(pa == pb);
    REQUIRE(a.train_mse_history.back() <= 0.05 * a.train_mse_history.front());
    REQUIRE(a.config.seed == 7);
}

TEST_CASE("gbt prediction validates its input") {
    Matrix x(30, 2);
    RngHandle rng(281);
    for (auto& v : x.data()) v = rng.normal();
    std::vector<double> y(30, 1.0);
    GbtConfig cfg;
    cfg.n_estimators = 2;
    const GbtModel m = gbt_fit(x, y, cfg);
    REQUIRE(m.predict(Matrix(0, 2)).empty());
    REQUIRE_THROWS_AS(m.predict(Matrix(3, 5)), ParameterError);
    REQUIRE_THROWS_AS(gbt_fit(Matrix(0, 2), {}, cfg), ParameterError);
    REQUIRE_THROWS_AS(gbt_fit(x, std::vector<double>(29, 0.0), cfg),
                      ParameterError);
}

TEST_CASE("depth-zero randomized trees collapse to the global mean") {
    RngHandle rng(301);
    Matrix x(40, 2);
    std::vector<double> y(40);
    double mean = 0.0;
    for (std::size_t i = 0; i < 40; ++i) {
        x(i, 0) = rng.normal();
        x(i, 1) = rng.normal();
        y[i] = rng.normal();
        mean += y[i];
    }
    mean /= 40.0;
    ExtraTreesConfig cfg;
    cfg.n_estimators = 5;
    cfg.max_depth = 0;
    const ExtraTreesModel m = extratrees_fit(x, y, cfg, RngHandle(302));
    for (double p : m.predict(x)) REQUIRE(p == Catch::Approx(mean).margin(1e-12));
}

TEST_CASE("randomized trees never split on a constant column") {
    RngHandle rng(311);
    const std::size_t n = 100;
    Matrix x(n, 2);
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        x(i, 0) = 5.0;
        x(i, 1) = rng.uniform();
        y[i] = x(i, 1);
    }
    ExtraTreesConfig cfg;
    cfg.n_estimators = 20;
    cfg.features_per_split = 2;
    const ExtraTreesModel m = extratrees_fit(x, y, cfg, RngHandle(312));
    for (const Tree& t : m.trees)
        for (const TreeNode& nd : t.nodes)
            if (!nd.is_leaf()) REQUIRE(nd.feature == 1);
}

TEST_CASE("randomized trees track a smooth curve") {
    RngHandle rng(321);
    const std::size_t n = 500;
    std::vector<double> xs(n), ys(n);
    for (std::size_t i = 0; i < n; ++i) {
        xs[i] = rng.uniform();
        ys[i] = std::sin(2.0 * std::numbers::pi * xs[i]);
    }
    const ExtraTreesModel m =
        extratrees_fit(column(xs), ys, ExtraTreesConfig{}, RngHandle(322));

    double ss_res = 0.0, ss_tot = 0.0;
    for (double t = 0.0025; t < 1.0; t += 0.005) {
        const double want = std::sin(2.0 * std::numbers::pi * t);
        const double got = m.predict(column({t}))[0];
        ss_res += (got - want) * (got - want);
        ss_tot += want * want;  // the sine has zero mean on this grid
    }
    REQUIRE(1.0 - ss_res / ss_tot >= 0.95);
}

TEST_CASE("with all features and unbounded depth the forest interpolates") {
    RngHandle rng(331);
    const std::size_t n = 16;
    Matrix x(n, 2);
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        x(i, 0) = rng.normal();
        x(i, 1) = rng.normal();
        y[i] = rng.normal();
    }
    ExtraTreesConfig cfg;
    cfg.n_estimators = 10;
    cfg.max_depth = 50;
    cfg.features_per_split = 2;
    const ExtraTreesModel m = extratrees_fit(x, y, cfg, RngHandle(332));
    const std::vector<double> pred = m.predict(x);
    for (std::size_t i = 0; i < n; ++i)
        REQUIRE(pred[i] == Catch::Approx(y[i]).margin(1e-12));
}

TEST_CASE("randomized forests are reproducible from the seed") {
    RngHandle rng(341);
    Matrix x(80, 3);
    std::vector<double> y(80);
    for (std::size_t i = 0; i < 80; ++i) {
        for (std::size_t j = 0; j < 3; ++j) x(i, j) = rng.normal();
        y[i] = x(i, 0) - x(i, 2);
    }
    ExtraTreesConfig cfg;
    cfg.n_estimators = 15;
    const ExtraTreesModel a = extratrees_fit(x, y, cfg, RngHandle(99));
    const ExtraTreesModel b = extratrees_fit(x, y, cfg, RngHandle(99));
    REQUIRE(a.predict(x) == b.predict(x));

    REQUIRE(a.predict(Matrix(0, 3)).empty());
    REQUIRE_THROWS_AS(a.predict(Matrix(2, 7)), ParameterError);
    cfg.n_estimators = 0;
    REQUIRE_THROWS_AS(extratrees_fit(x, y, cfg, RngHandle(1)), ParameterError);
}

TEST_CASE("holdout boosting keeps exactly the best iteration") {
    RngHandle rng(401);
    const std::size_t n = 200;
    Matrix x(n, 2);
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        x(i, 0) = rng.normal();
        x(i, 1) = rng.normal();
        y[i] = x(i, 0) + 0.5 * rng.normal();
    }
    MetaGbtConfig cfg;
    cfg.max_estimators = 300;
    const MetaGbtModel m = meta_gbt_fit(x, y, cfg, RngHandle(402));

    REQUIRE(m.trees.size() == m.best_iteration);
    REQUIRE(m.best_iteration < cfg.max_estimators);
    double lowest = m.val_history[0];
    for (double v : m.val_history) lowest = std::min(lowest, v);
    REQUIRE(m.val_history[m.best_iteration] == lowest);

    const MetaGbtModel again = meta_gbt_fit(x, y, cfg, RngHandle(402));
    REQUIRE(again.best_iteration == m.best_iteration);
    REQUIRE(again.predict(x) == m.predict(x));
}

TEST_CASE("zero patience stops at the first non-improving round") {
    Matrix x(24, 1);
    for (std::size_t i = 0; i < 24; ++i) x(i, 0) = static_cast<double>(i);
    const std::vector<double> y(24, 3.0);
    MetaGbtConfig cfg;
    cfg.patience = 0;
    const MetaGbtModel m = meta_gbt_fit(x, y, cfg, RngHandle(411));
    // Constant targets: the first tree cannot improve the holdout, so nothing
    // is retained and the prediction is the training mean.
    REQUIRE(m.best_iteration == 0);
    REQUIRE(m.trees.empty());
    REQUIRE(m.val_history.size() == 2);
    REQUIRE(m.predict(x)[0] == Catch::Approx(3.0));
}

TEST_CASE("holdout boosting refuses tiny training sets") {
    Matrix x(19, 1);
    for (std::size_t i = 0; i < 19; ++i) x(i, 0) = static_cast<double>(i);
    std::vector<double> y(19, 1.0);
    REQUIRE_THROWS_AS(meta_gbt_fit(x, y, MetaGbtConfig{}, RngHandle(1)),
                      ParameterError);

    Matrix x20(20, 1);
    for (std::size_t i = 0; i < 20; ++i) x20(i, 0) = static_cast<double>(i);
    std::vector<double> y20(20);
    for (std::size_t i = 0; i < 20; ++i) y20[i] = x20(i, 0);
    const MetaGbtModel m = meta_gbt_fit(x20, y20, MetaGbtConfig{}, RngHandle(2));
    REQUIRE(m.val_history.size() >= 1);
}

TEST_CASE("ordered target statistics use only earlier rows") {
    const std::vector<int> codes{0, 0};
    const std::vector<double> targets{1.0, 0.0};
    const std::vector<std::size_t> order{0, 1};
    const auto ts = target_statistic(codes, targets, order, 1.0, 0.5);
    REQUIRE(ts[0] == Catch::Approx(0.5));   // first sighting falls back on the prior
    REQUIRE(ts[1] == Catch::Approx(0.75));  // (1 + 1*0.5) / (1 + 1)

    // Reversing the pass order swaps which row sees history.
    const auto rev = target_statistic(codes, targets, {1, 0}, 1.0, 0.5);
    REQUIRE(rev[1] == Catch::Approx(0.5));
    REQUIRE(rev[0] == Catch::Approx(0.25));  // (0 + 0.5) / 2
}

TEST_CASE("target statistics shrink to the prior as smoothing grows") {
    const std::vector<int> codes{0, 1, 0, 1, 0};
    const std::vector<double> targets{1, 0, 1, 1, 0};
    const std::vector<std::size_t> order{0, 1, 2, 3, 4};
    for (double v : target_statistic(codes, targets, order, 1e12, 0.3))
        REQUIRE(v == Catch::Approx(0.3).margin(1e-9));
}

TEST_CASE("target statistics never leak later targets") {
    RngHandle rng(421);
    const std::size_t n = 30;
    std::vector<int> codes(n);
    std::vector<double> targets(n);
    for (std::size_t i = 0; i < n; ++i) {
        codes[i] = static_cast<int>(rng.uniform_int(4));
        targets[i] = rng.uniform();
    }
    const std::vector<std::size_t> order = rng.permutation(n);
    const auto base = target_statistic(codes, targets, order, 1.0, 0.5);

    // Corrupting the target of the last row in the pass changes nothing: no
    // row, including itself, ever reads it.
    std::vector<double> tampered = targets;
    tampered[order.back()] = 1e6;
    REQUIRE(target_statistic(codes, tampered, order, 1.0, 0.5) == base);
}

TEST_CASE("target statistics validate their inputs") {
    const std::vector<int> codes{0, 1};
    const std::vector<double> y{1.0, 2.0};
    REQUIRE_THROWS_AS(target_statistic(codes, {1.0}, {0, 1}, 1.0, 0.5),
                      ParameterError);
    REQUIRE_THROWS_AS(target_statistic(codes, y, {0}, 1.0, 0.5), ContractError);
    REQUIRE_THROWS_AS(target_statistic(codes, y, {0, 0}, 1.0, 0.5), ContractError);
    REQUIRE_THROWS_AS(target_statistic(codes, y, {0, 1}, 0.0, 0.5), ParameterError);
    REQUIRE_THROWS_AS(target_statistic({0, -1}, y, {0, 1}, 1.0, 0.5),
                      ParameterError);
}

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "spinml/errors.hpp"
#include "spinml/gbt.hpp"
#include "spinml/linalg.hpp"
#include "spinml/rng.hpp"

namespace spinml {

// Prior-smoothed running-mean encoding of a categorical column: the row at
// permutation position t sees only the targets of strictly earlier rows of
// its own category, so the encoding never leaks a row's own target. Rows
// whose category has no history yet fall back to the prior P.
inline std::vector<double> target_statistic(const std::vector<int>& codes,
                                            const std::vector<double>& targets,
                                            const std::vector<std::size_t>& permutation,
                                            double a, double prior) {
    const std::size_t n = codes.size();
    if (targets.size() != n)
        throw ParameterError(detail::cat("target_statistic: ", n, " codes vs ",
                                         targets.size(), " targets"));
    if (!(a > 0.0))
        throw ParameterError(detail::cat("target_statistic: a = ", a,
                                         " must be positive"));
    if (permutation.size() != n)
        throw ContractError(detail::cat("target_statistic: permutation has ",
                                        permutation.size(), " entries for ", n,
                                        " rows"));
    std::vector<bool> seen(n, false);
    for (const std::size_t p : permutation) {
        if (p >= n || seen[p])
            throw ContractError("target_statistic: permutation is not a bijection");
        seen[p] = true;
    }

    int max_code = 0;
    for (const int c : codes) {
        if (c < 0) throw ParameterError("target_statistic: negative category code");
        max_code = std::max(max_code, c);
    }
    std::vector<double> cat_sum(static_cast<std::size_t>(max_code) + 1, 0.0);
    std::vector<double> cat_count(static_cast<std::size_t>(max_code) + 1, 0.0);
    std::vector<double> out(n);
    for (const std::size_t r : permutation) {
        const std::size_t c = static_cast<std::size_t>(codes[r]);
        out[r] = (cat_sum[c] + a * prior) / (cat_count[c] + a);
        cat_sum[c] += targets[r];
        cat_count[c] += 1.0;
    }
    return out;
}

struct MetaGbtConfig {
    std::size_t max_estimators = 1000;
    std::size_t patience = 50;
    double validation_fraction = 0.1;
    std::size_t max_depth = 6;
    double learning_rate = 0.05;
    double lambda = 1.0;
    double gamma = 0.0;
};

// Gradient boosting with a seeded internal holdout: training stops once the
// holdout MSE has gone `patience` consecutive rounds without a strict
// improvement, and only the trees up to the best-holdout round are kept.
struct MetaGbtModel {
    MetaGbtConfig config;
    std::size_t input_width = 0;
    double base_score = 0.0;
    std::vector<Tree> trees;
    std::size_t best_iteration = 0;     // retained tree count
    std::vector<double> val_history;    // entry 0 is the tree-free baseline

    std::vector<double> predict(const Matrix& features) const {
        if (features.rows() == 0) return {};
        if (features.cols() != input_width)
            throw ParameterError(detail::cat("meta_gbt predict: expected ",
                                             input_width, " features, got ",
                                             features.cols()));
        std::vector<double> out(features.rows(), base_score);
        for (const Tree& t : trees)
            for (std::size_t i = 0; i < out.size(); ++i)
                out[i] += config.learning_rate * t.eval(features.row(i));
        return out;
    }
};

inline MetaGbtModel meta_gbt_fit(const Matrix& features,
                                 const std::vector<double>& targets,
                                 const MetaGbtConfig& config, RngHandle rng) {
    const std::size_t n = features.rows();
    if (targets.size() != n)
        throw ParameterError(detail::cat("meta_gbt_fit: ", n, " rows vs ",
                                         targets.size(), " targets"));
    if (n < 20)
        throw ParameterError(detail::cat(
            "meta_gbt_fit: ", n, " rows cannot spare a validation holdout (need 20)"));

    const std::vector<std::size_t> perm = rng.permutation(n);
    const std::size_t n_val = std::max<std::size_t>(
        1, static_cast<std::size_t>(config.validation_fraction * static_cast<double>(n)));
    std::vector<std::size_t> val_idx(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::vector<std::size_t> train_idx(perm.begin() + static_cast<std::ptrdiff_t>(n_val), perm.end());

    const std::size_t nt = train_idx.size(), nv = val_idx.size();
    Matrix xt(nt, features.cols()), xv(nv, features.cols());
    std::vector<double> yt(nt), yv(nv);
    for (std::size_t i = 0; i < nt; ++i) {
        std::copy(features.row(train_idx[i]), features.row(train_idx[i]) + features.cols(), xt.row(i));
        yt[i] = targets[train_idx[i]];
    }
    for (std::size_t i = 0; i < nv; ++i) {
        std::copy(features.row(val_idx[i]), features.row(val_idx[i]) + features.cols(), xv.row(i));
        yv[i] = targets[val_idx[i]];
    }

    MetaGbtModel model;
    model.config = config;
    model.input_width = features.cols();
    model.base_score =
        std::accumulate(yt.begin(), yt.end(), 0.0) / static_cast<double>(nt);

    std::vector<double> yhat_t(nt, model.base_score);
    std::vector<double> yhat_v(nv, model.base_score);
    auto val_mse = [&]() {
        double s = 0.0;
        for (std::size_t i = 0; i < nv; ++i) {
            const double r = yhat_v[i] - yv[i];
            s += r * r;
        }
        return s / static_cast<double>(nv);
    };

    double best = val_mse();
    model.val_history.push_back(best);
    model.best_iteration = 0;

    detail::GbtTreeBuilder builder(xt, xt.cols(), config.lambda, config.gamma,
                                   config.max_depth, 0);
    std::vector<double> grad(nt);
    std::vector<int> leaf_of;
    for (std::size_t m = 1; m <= config.max_estimators; ++m) {
        for (std::size_t i = 0; i < nt; ++i) grad[i] = yhat_t[i] - yt[i];
        Tree tree = builder.build(grad, leaf_of);
        for (std::size_t i = 0; i < nt; ++i)
            yhat_t[i] += config.learning_rate *
                         tree.nodes[static_cast<std::size_t>(leaf_of[i])].value;
        for (std::size_t i = 0; i < nv; ++i)
            yhat_v[i] += config.learning_rate * tree.eval(xv.row(i));
        model.trees.push_back(std::move(tree));

        const double loss = val_mse();
        model.val_history.push_back(loss);
        if (!std::isfinite(loss))
            throw DivergenceError(
                detail::cat("meta_gbt_fit: non-finite holdout loss at iteration ", m),
                static_cast<long>(m));
        if (loss < best) {
            best = loss;
            model.best_iteration = m;
        } else if (m - model.best_iteration >= std::max<std::size_t>(config.patience, 1)) {
            break;
        }
    }
    model.trees.resize(model.best_iteration);
    return model;
}

}  // namespace spinml

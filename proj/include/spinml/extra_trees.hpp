#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "spinml/errors.hpp"
#include "spinml/linalg.hpp"
#include "spinml/rng.hpp"
#include "spinml/tree.hpp"

namespace spinml {

// Variance reduction of splitting a node's targets by a boolean mask:
// Var(t) - (n_L/n) Var(t_L) - (n_R/n) Var(t_R), population convention.
inline double variance_reduction(const std::vector<double>& targets,
                                 const std::vector<bool>& left_mask) {
    if (targets.size() != left_mask.size())
        throw ContractError(detail::cat("variance_reduction: ", targets.size(),
                                        " targets vs ", left_mask.size(),
                                        " mask entries"));
    double sum = 0.0, sumsq = 0.0, lsum = 0.0, lsumsq = 0.0;
    std::size_t n_l = 0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        const double y = targets[i];
        sum += y;
        sumsq += y * y;
        if (left_mask[i]) {
            lsum += y;
            lsumsq += y * y;
            ++n_l;
        }
    }
    const std::size_t n = targets.size();
    const std::size_t n_r = n - n_l;
    if (n_l == 0 || n_r == 0)
        throw ContractError("variance_reduction: empty child");
    auto var = [](double s, double sq, std::size_t cnt) {
        const double m = s / static_cast<double>(cnt);
        return std::max(sq / static_cast<double>(cnt) - m * m, 0.0);
    };
    return var(sum, sumsq, n) -
           static_cast<double>(n_l) / static_cast<double>(n) * var(lsum, lsumsq, n_l) -
           static_cast<double>(n_r) / static_cast<double>(n) *
               var(sum - lsum, sumsq - lsumsq, n_r);
}

struct ExtraTreesConfig {
    std::size_t n_estimators = 300;
    std::size_t max_depth = 15;
    std::size_t features_per_split = 0;  // 0 = ceil(sqrt(width))

    std::size_t effective_features(std::size_t width) const {
        if (features_per_split > 0) return std::min(features_per_split, width);
        return static_cast<std::size_t>(
            std::ceil(std::sqrt(static_cast<double>(width))));
    }
};

struct ExtraTreesModel {
    ExtraTreesConfig config;
    std::size_t input_width = 0;
    std::uint64_t seed = 0;
    std::vector<Tree> trees;

    std::vector<double> predict(const Matrix& features) const {
        if (features.rows() == 0) return {};
        if (features.cols() != input_width)
            throw ParameterError(detail::cat("extra_trees predict: expected ",
                                             input_width, " features, got ",
                                             features.cols()));
        std::vector<double> out(features.rows(), 0.0);
        for (const Tree& t : trees)
            for (std::size_t i = 0; i < out.size(); ++i)
                out[i] += t.eval(features.row(i));
        const double inv = 1.0 / static_cast<double>(trees.size());
        for (double& v : out) v *= inv;
        return out;
    }
};

namespace detail {

// One extremely randomized tree: every node draws a random feature subset,
// one uniform threshold inside each candidate's observed range, and keeps
// the candidate with the largest variance reduction. All rows participate
// (no bootstrap); leaves store the target mean.
class ExtraTreeBuilder {
public:
    ExtraTreeBuilder(const Matrix& x, const std::vector<double>& y,
                     std::size_t features_per_node, std::size_t max_depth,
                     RngHandle rng)
        : x_(x), y_(y), k_(features_per_node), max_depth_(max_depth), rng_(rng) {}

    Tree build() {
        Tree tree;
        tree.nodes.emplace_back();
        std::vector<std::uint32_t> rows(x_.rows());
        std::iota(rows.begin(), rows.end(), 0u);
        grow(tree, 0, std::move(rows), 0);
        return tree;
    }

private:
    struct Candidate {
        double reduction = -1.0;
        int feature = -1;
        double threshold = 0.0;
    };

    void grow(Tree& tree, int node, std::vector<std::uint32_t> rows,
              std::size_t depth) {
        const std::size_t ni = static_cast<std::size_t>(node);
        double sum = 0.0, sumsq = 0.0;
        double ylo = y_[rows[0]], yhi = ylo;
        for (const std::uint32_t r : rows) {
            sum += y_[r];
            sumsq += y_[r] * y_[r];
            ylo = std::min(ylo, y_[r]);
            yhi = std::max(yhi, y_[r]);
        }
        const double n = static_cast<double>(rows.size());
        if (depth >= max_depth_ || rows.size() < 2 || ylo == yhi) {
            tree.nodes[ni].value = sum / n;
            return;
        }

        Candidate best;
        const std::vector<std::size_t> feats = rng_.sample_indices(k_, x_.cols());
        for (const std::size_t f : feats) {
            double lo = x_(rows[0], f), hi = lo;
            for (const std::uint32_t r : rows) {
                lo = std::min(lo, x_(r, f));
                hi = std::max(hi, x_(r, f));
            }
            if (lo == hi) continue;  // degenerate range: not a valid split
            const double thr = lo + rng_.uniform_pos() * (hi - lo);
            double lsum = 0.0, lsumsq = 0.0;
            std::size_t n_l = 0;
            for (const std::uint32_t r : rows)
                if (x_(r, f) < thr) {
                    lsum += y_[r];
                    lsumsq += y_[r] * y_[r];
                    ++n_l;
                }
            const double nl = static_cast<double>(n_l);
            const double nr = n - nl;
            auto var = [](double s, double sq, double cnt) {
                const double m = s / cnt;
                return std::max(sq / cnt - m * m, 0.0);
            };
            const double reduction = var(sum, sumsq, n) -
                                     nl / n * var(lsum, lsumsq, nl) -
                                     nr / n * var(sum - lsum, sumsq - lsumsq, nr);
            if (reduction > best.reduction)
                best = Candidate{reduction, static_cast<int>(f), thr};
        }

        if (best.feature < 0) {
            tree.nodes[ni].value = sum / n;
            return;
        }

        std::vector<std::uint32_t> left_rows, right_rows;
        for (const std::uint32_t r : rows) {
            if (x_(r, static_cast<std::size_t>(best.feature)) < best.threshold)
                left_rows.push_back(r);
            else
                right_rows.push_back(r);
        }
        rows.clear();
        rows.shrink_to_fit();
        const int l = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();
        const int r = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();
        tree.nodes[ni].feature = best.feature;
        tree.nodes[ni].threshold = best.threshold;
        tree.nodes[ni].left = l;
        tree.nodes[ni].right = r;
        grow(tree, l, std::move(left_rows), depth + 1);
        grow(tree, r, std::move(right_rows), depth + 1);
    }

    const Matrix& x_;
    const std::vector<double>& y_;
    std::size_t k_;
    std::size_t max_depth_;
    RngHandle rng_;
};

}  // namespace detail

// Trees are independent given their substream seeds, so tree construction
// can fan out across workers without affecting the result.
inline ExtraTreesModel extratrees_fit(const Matrix& features,
                                      const std::vector<double>& targets,
                                      const ExtraTreesConfig& config,
                                      RngHandle rng) {
    const std::size_t n = features.rows();
    if (n == 0 || features.cols() == 0)
        throw ParameterError("extratrees_fit: empty training set");
    if (targets.size() != n)
        throw ParameterError(detail::cat("extratrees_fit: ", n, " rows vs ",
                                         targets.size(), " targets"));
    if (config.n_estimators == 0)
        throw ParameterError("extratrees_fit: need at least one tree");

    ExtraTreesModel model;
    model.config = config;
    model.input_width = features.cols();
    model.seed = rng.seed();
    const std::size_t k = config.effective_features(features.cols());
    for (std::size_t t = 0; t < config.n_estimators; ++t) {
        detail::ExtraTreeBuilder builder(features, targets, k, config.max_depth,
                                         rng.substream(t));
        model.trees.push_back(builder.build());
    }
    return model;
}

}  // namespace spinml

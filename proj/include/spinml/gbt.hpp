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

// Second-order gain of splitting a node with gradient/hessian totals (g, h)
// so that (g_l, h_l) go left. Positive gain is required to take a split.
inline double gbt_split_gain(double g, double h, double g_l, double h_l,
                             double lambda, double gamma) {
    const double g_r = g - g_l;
    const double h_r = h - h_l;
    return 0.5 * (g_l * g_l / (h_l + lambda) + g_r * g_r / (h_r + lambda) -
                  g * g / (h + lambda)) -
           gamma;
}

struct GbtConfig {
    std::size_t n_estimators = 300;
    std::size_t max_depth = 10;
    double learning_rate = 0.05;
    double lambda = 1.0;
    double gamma = 0.0;
    // 0 = automatic: every feature when the width is at most 256, else
    // ceil(sqrt(width)) random features per node.
    std::size_t features_per_split = 0;
    std::uint64_t seed = 0;  // consumed only when subsampling features

    std::size_t effective_features(std::size_t width) const {
        if (features_per_split > 0) return std::min(features_per_split, width);
        if (width <= 256) return width;
        return static_cast<std::size_t>(
            std::ceil(std::sqrt(static_cast<double>(width))));
    }
};

struct GbtModel {
    GbtConfig config;
    std::size_t input_width = 0;
    double base_score = 0.0;
    std::vector<Tree> trees;
    std::vector<double> train_mse_history;  // entry 0 is the pre-boosting loss

    std::vector<double> predict(const Matrix& features) const {
        if (features.rows() == 0) return {};
        if (features.cols() != input_width)
            throw ParameterError(detail::cat("gbt predict: expected ",
                                             input_width, " features, got ",
                                             features.cols()));
        std::vector<double> out(features.rows(), base_score);
        for (const Tree& t : trees)
            for (std::size_t i = 0; i < out.size(); ++i)
                out[i] += config.learning_rate * t.eval(features.row(i));
        return out;
    }
};

namespace detail {

// Greedy exact-split tree construction on squared-error gradients (hessian 1
// per row). Two build paths share the contract: a presorted level-wise scan
// when every feature is considered at each node, and a node-wise gather when
// features are subsampled. Ties break toward the lowest feature index, then
// the lowest threshold, which both paths realize by scanning features in
// ascending order and accepting only strictly better gains.
class GbtTreeBuilder {
public:
    GbtTreeBuilder(const Matrix& x, std::size_t features_per_node,
                   double lambda, double gamma, std::size_t max_depth,
                   std::uint64_t seed)
        : x_(x),
          lambda_(lambda),
          gamma_(gamma),
          max_depth_(max_depth),
          k_(features_per_node),
          rng_(seed) {
        if (k_ >= x_.cols()) {
            k_ = x_.cols();
            presort();
        }
    }

    // leaf_of[i] receives the node index of row i's leaf in the returned tree.
    Tree build(const std::vector<double>& grad, std::vector<int>& leaf_of) {
        return k_ == x_.cols() ? build_presorted(grad, leaf_of)
                               : build_sampled(grad, leaf_of);
    }

private:
    struct Best {
        double gain = 0.0;
        int feature = -1;
        double threshold = 0.0;
    };

    void presort() {
        const std::size_t n = x_.rows(), d = x_.cols();
        for (std::size_t f = 0; f < d; ++f) {
            double lo = x_(0, f), hi = x_(0, f);
            for (std::size_t i = 1; i < n; ++i) {
                lo = std::min(lo, x_(i, f));
                hi = std::max(hi, x_(i, f));
            }
            if (lo == hi) continue;  // constant column: never splittable
            std::vector<std::uint32_t> idx(n);
            std::iota(idx.begin(), idx.end(), 0u);
            std::stable_sort(idx.begin(), idx.end(),
                             [&](std::uint32_t a, std::uint32_t b) {
                                 return x_(a, f) < x_(b, f);
                             });
            sorted_.push_back(std::move(idx));
            sorted_features_.push_back(static_cast<int>(f));
        }
    }

    Tree build_presorted(const std::vector<double>& grad,
                         std::vector<int>& leaf_of) {
        const std::size_t n = x_.rows();
        Tree tree;
        tree.nodes.emplace_back();
        std::vector<int> node_of(n, 0);
        std::vector<double> node_g{0.0}, node_h{0.0};
        for (std::size_t i = 0; i < n; ++i) node_g[0] += grad[i];
        node_h[0] = static_cast<double>(n);

        std::vector<int> level;
        if (max_depth_ > 0 && n >= 2) level.push_back(0);
        std::size_t depth = 0;

        struct ScanState {
            double g_l = 0.0, h_l = 0.0, last = 0.0;
            bool started = false;
        };
        std::vector<int> slot_of;
        std::vector<ScanState> state;
        std::vector<Best> best;

        while (!level.empty()) {
            const std::size_t slots = level.size();
            slot_of.assign(tree.nodes.size(), -1);
            for (std::size_t s = 0; s < slots; ++s)
                slot_of[static_cast<std::size_t>(level[s])] = static_cast<int>(s);
            best.assign(slots, Best{});

            for (std::size_t fi = 0; fi < sorted_.size(); ++fi) {
                const int f = sorted_features_[fi];
                state.assign(slots, ScanState{});
                for (const std::uint32_t r : sorted_[fi]) {
                    const int slot = slot_of[static_cast<std::size_t>(node_of[r])];
                    if (slot < 0) continue;
                    ScanState& st = state[static_cast<std::size_t>(slot)];
                    const double v = x_(r, static_cast<std::size_t>(f));
                    if (st.started && v > st.last) {
                        const int node = level[static_cast<std::size_t>(slot)];
                        const double gain = gbt_split_gain(
                            node_g[static_cast<std::size_t>(node)],
                            node_h[static_cast<std::size_t>(node)], st.g_l,
                            st.h_l, lambda_, gamma_);
                        Best& b = best[static_cast<std::size_t>(slot)];
                        if (gain > b.gain) b = Best{gain, f, 0.5 * (st.last + v)};
                    }
                    st.g_l += grad[r];
                    st.h_l += 1.0;
                    st.last = v;
                    st.started = true;
                }
            }

            std::vector<int> next;
            for (std::size_t s = 0; s < slots; ++s) {
                const int node = level[s];
                const std::size_t ni = static_cast<std::size_t>(node);
                if (best[s].feature < 0 || !(best[s].gain > 0.0)) {
                    tree.nodes[ni].value =
                        -node_g[ni] / (node_h[ni] + lambda_);
                    continue;
                }
                const int l = static_cast<int>(tree.nodes.size());
                tree.nodes.emplace_back();
                const int r = static_cast<int>(tree.nodes.size());
                tree.nodes.emplace_back();
                tree.nodes[ni].feature = best[s].feature;
                tree.nodes[ni].threshold = best[s].threshold;
                tree.nodes[ni].left = l;
                tree.nodes[ni].right = r;
                node_g.resize(tree.nodes.size(), 0.0);
                node_h.resize(tree.nodes.size(), 0.0);
                if (depth + 1 < max_depth_) {
                    next.push_back(l);
                    next.push_back(r);
                }
            }

            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t ni = static_cast<std::size_t>(node_of[i]);
                if (slot_of[ni] < 0 || tree.nodes[ni].is_leaf()) continue;
                const TreeNode& nd = tree.nodes[ni];
                const int child =
                    x_(i, static_cast<std::size_t>(nd.feature)) < nd.threshold
                        ? nd.left
                        : nd.right;
                node_of[i] = child;
                node_g[static_cast<std::size_t>(child)] += grad[i];
                node_h[static_cast<std::size_t>(child)] += 1.0;
            }

            // Children cut off by the depth bound become leaves now.
            for (std::size_t s = 0; s < slots; ++s) {
                const std::size_t ni = static_cast<std::size_t>(level[s]);
                if (tree.nodes[ni].is_leaf() || depth + 1 < max_depth_) continue;
                for (const int c : {tree.nodes[ni].left, tree.nodes[ni].right}) {
                    const std::size_t ci = static_cast<std::size_t>(c);
                    tree.nodes[ci].value = -node_g[ci] / (node_h[ci] + lambda_);
                }
            }

            level = std::move(next);
            ++depth;
        }

        if (tree.nodes.size() == 1)
            tree.nodes[0].value = -node_g[0] / (node_h[0] + lambda_);
        leaf_of.assign(node_of.begin(), node_of.end());
        return tree;
    }

    Tree build_sampled(const std::vector<double>& grad,
                       std::vector<int>& leaf_of) {
        const std::size_t n = x_.rows();
        Tree tree;
        tree.nodes.emplace_back();
        leaf_of.assign(n, 0);
        std::vector<std::uint32_t> rows(n);
        std::iota(rows.begin(), rows.end(), 0u);
        double g = 0.0;
        for (std::size_t i = 0; i < n; ++i) g += grad[i];
        grow_sampled(tree, 0, std::move(rows), g, 0, grad, leaf_of);
        return tree;
    }

    void grow_sampled(Tree& tree, int node, std::vector<std::uint32_t> rows,
                      double g, std::size_t depth,
                      const std::vector<double>& grad,
                      std::vector<int>& leaf_of) {
        const double h = static_cast<double>(rows.size());
        const std::size_t ni = static_cast<std::size_t>(node);
        Best best;
        if (depth < max_depth_ && rows.size() >= 2) {
            std::vector<std::size_t> feats = rng_.sample_indices(k_, x_.cols());
            std::sort(feats.begin(), feats.end());
            std::vector<std::pair<double, double>> vals;
            for (const std::size_t f : feats) {
                double lo = x_(rows[0], f), hi = lo;
                for (const std::uint32_t r : rows) {
                    lo = std::min(lo, x_(r, f));
                    hi = std::max(hi, x_(r, f));
                }
                if (lo == hi) continue;
                vals.clear();
                for (const std::uint32_t r : rows) vals.emplace_back(x_(r, f), grad[r]);
                std::sort(vals.begin(), vals.end());
                double g_l = 0.0, h_l = 0.0;
                for (std::size_t i = 1; i < vals.size(); ++i) {
                    g_l += vals[i - 1].second;
                    h_l += 1.0;
                    if (vals[i].first > vals[i - 1].first) {
                        const double gain =
                            gbt_split_gain(g, h, g_l, h_l, lambda_, gamma_);
                        if (gain > best.gain)
                            best = Best{gain, static_cast<int>(f),
                                        0.5 * (vals[i - 1].first + vals[i].first)};
                    }
                }
            }
        }
        if (best.feature < 0 || !(best.gain > 0.0)) {
            tree.nodes[ni].value = -g / (h + lambda_);
            for (const std::uint32_t r : rows) leaf_of[r] = node;
            return;
        }
        std::vector<std::uint32_t> left_rows, right_rows;
        double g_left = 0.0;
        for (const std::uint32_t r : rows) {
            if (x_(r, static_cast<std::size_t>(best.feature)) < best.threshold) {
                left_rows.push_back(r);
                g_left += grad[r];
            } else {
                right_rows.push_back(r);
            }
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
        grow_sampled(tree, l, std::move(left_rows), g_left, depth + 1, grad, leaf_of);
        grow_sampled(tree, r, std::move(right_rows), g - g_left, depth + 1, grad, leaf_of);
    }

    const Matrix& x_;
    double lambda_, gamma_;
    std::size_t max_depth_;
    std::size_t k_;
    RngHandle rng_;
    std::vector<std::vector<std::uint32_t>> sorted_;
    std::vector<int> sorted_features_;
};

}  // namespace detail

inline GbtModel gbt_fit(const Matrix& features, const std::vector<double>& targets,
                        const GbtConfig& config) {
    const std::size_t n = features.rows();
    if (n == 0 || features.cols() == 0)
        throw ParameterError("gbt_fit: empty training set");
    if (targets.size() != n)
        throw ParameterError(detail::cat("gbt_fit: ", n, " rows vs ",
                                         targets.size(), " targets"));

    GbtModel model;
    model.config = config;
    model.input_width = features.cols();
    model.base_score =
        std::accumulate(targets.begin(), targets.end(), 0.0) / static_cast<double>(n);

    std::vector<double> yhat(n, model.base_score);
    auto mse = [&]() {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double r = yhat[i] - targets[i];
            s += r * r;
        }
        return s / static_cast<double>(n);
    };
    const double initial = mse();
    model.train_mse_history.push_back(initial);

    detail::GbtTreeBuilder builder(features,
                                   config.effective_features(features.cols()),
                                   config.lambda, config.gamma,
                                   config.max_depth, config.seed);
    std::vector<double> grad(n);
    std::vector<int> leaf_of;
    for (std::size_t m = 1; m <= config.n_estimators; ++m) {
        for (std::size_t i = 0; i < n; ++i) grad[i] = yhat[i] - targets[i];
        Tree tree = builder.build(grad, leaf_of);
        for (std::size_t i = 0; i < n; ++i)
            yhat[i] += config.learning_rate *
                       tree.nodes[static_cast<std::size_t>(leaf_of[i])].value;
        const double loss = mse();
        model.train_mse_history.push_back(loss);
        if (!std::isfinite(loss) || loss > 10.0 * initial)
            throw DivergenceError(
                detail::cat("gbt_fit: loss ", loss, " at iteration ", m,
                            " exceeds 10x the initial ", initial),
                static_cast<long>(m));
        model.trees.push_back(std::move(tree));
    }
    return model;
}

}  // namespace spinml

#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

namespace spinml {

// Axis-aligned binary regression tree node. feature < 0 marks a leaf; rows
// with x[feature] < threshold descend left.
struct TreeNode {
    int feature = -1;
    double threshold = 0.0;
    double value = 0.0;
    int left = -1;
    int right = -1;

    bool is_leaf() const noexcept { return feature < 0; }
};

// Nodes stored in one flat pool, root at index 0.
struct Tree {
    std::vector<TreeNode> nodes;

    double eval(const double* x) const {
        std::size_t i = 0;
        while (!nodes[i].is_leaf()) {
            const TreeNode& n = nodes[i];
            i = static_cast<std::size_t>(x[n.feature] < n.threshold ? n.left
                                                                    : n.right);
        }
        return nodes[i].value;
    }

    int depth() const { return node_depth(0); }

    std::size_t leaf_count() const {
        std::size_t leaves = 0;
        for (const TreeNode& n : nodes) leaves += n.is_leaf();
        return leaves;
    }

private:
    int node_depth(std::size_t i) const {
        if (nodes[i].is_leaf()) return 0;
        return 1 + std::max(node_depth(static_cast<std::size_t>(nodes[i].left)),
                            node_depth(static_cast<std::size_t>(nodes[i].right)));
    }
};

}  // namespace spinml

#pragma once

#include <cstdint>
#include <vector>

#include "stanp/flat_feature.hpp"
#include "stanp/rng.hpp"

namespace stanp {

struct TreeConfig {
    std::size_t max_depth = 12;
    std::size_t min_leaf = 5;
    std::size_t feature_subsample = 0;  // candidate features per node, 0 = all
};

// feature == -1 marks a leaf; leaves keep their training row indices so the
// ensembles can pool raw target values at prediction time.
struct TreeNode {
    std::int32_t feature = -1;
    double threshold = 0.0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    std::vector<std::int32_t> rows;
};

// Per-feature row orderings of the full training matrix, sorted by
// (value, row). Computed once and shared across boosting rounds.
using SortedColumns = std::vector<std::vector<std::int32_t>>;

SortedColumns sort_columns(const FeatureMatrix& x);

// CART regression tree with variance-reduction splits. The split threshold is
// the smallest value routed right; prediction sends x < threshold left, so
// training partitions and prediction walks agree exactly.
class RegressionTree {
public:
    // Sorts the sampled candidate features at every node. `rows` may contain
    // duplicates (bootstrap bags).
    void fit(const FeatureMatrix& x, const std::vector<double>& y, std::vector<std::int32_t> rows,
             const TreeConfig& config, Rng& rng);

    // Fits on all rows of `x` using shared pre-sorted columns, partitioning
    // the orderings down the tree instead of re-sorting per node.
    void fit_presorted(const FeatureMatrix& x, const std::vector<double>& y, const SortedColumns& columns,
                       const TreeConfig& config, Rng& rng);

    std::size_t leaf_index(const double* x) const;

    bool fitted() const { return !nodes_.empty(); }
    const std::vector<TreeNode>& nodes() const { return nodes_; }
    static RegressionTree from_nodes(std::vector<TreeNode> nodes);

private:
    std::vector<TreeNode> nodes_;
};

}  // namespace stanp

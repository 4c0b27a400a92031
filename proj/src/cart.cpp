#include "stanp/cart.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "stanp/errors.hpp"

namespace stanp {

namespace {

struct SplitChoice {
    bool found = false;
    std::size_t feature = 0;
    double threshold = 0.0;
    double score = 0.0;
    std::size_t left_count = 0;
};

// Best split position over rows already ordered by feature value. Maximizes
// sum_L^2/n_L + sum_R^2/n_R, which is equivalent to minimizing the summed
// child SSE because the total sum of squares is fixed.
void scan_ordered(const FeatureMatrix& x, const std::vector<double>& y, const std::vector<std::int32_t>& ordered,
                  std::size_t feature, std::size_t min_leaf, SplitChoice& best) {
    const std::size_t m = ordered.size();
    double total = 0.0;
    for (std::int32_t r : ordered) total += y[static_cast<std::size_t>(r)];

    double left_sum = 0.0;
    for (std::size_t i = 0; i + min_leaf < m; ++i) {
        left_sum += y[static_cast<std::size_t>(ordered[i])];
        const std::size_t n_left = i + 1;
        if (n_left < min_leaf) continue;
        const double xi = x.row(static_cast<std::size_t>(ordered[i]))[feature];
        const double xnext = x.row(static_cast<std::size_t>(ordered[i + 1]))[feature];
        if (xi == xnext) continue;
        const double right_sum = total - left_sum;
        const std::size_t n_right = m - n_left;
        const double score = left_sum * left_sum / static_cast<double>(n_left) +
                             right_sum * right_sum / static_cast<double>(n_right);
        if (!best.found || score > best.score) {
            best.found = true;
            best.feature = feature;
            best.threshold = xnext;
            best.score = score;
            best.left_count = n_left;
        }
    }
}

std::vector<std::size_t> sample_features(std::size_t p, std::size_t k, Rng& rng) {
    std::vector<std::size_t> all(p);
    std::iota(all.begin(), all.end(), std::size_t{0});
    if (k >= p) return all;
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + rng.uniform_index(p - i);
        std::swap(all[i], all[j]);
    }
    all.resize(k);
    return all;
}

bool improves(const SplitChoice& best, const std::vector<double>& y, const std::vector<std::int32_t>& rows) {
    if (!best.found) return false;
    double total = 0.0;
    for (std::int32_t r : rows) total += y[static_cast<std::size_t>(r)];
    const double parent = total * total / static_cast<double>(rows.size());
    return best.score > parent + 1e-12 * (std::abs(parent) + 1.0);
}

}  // namespace

SortedColumns sort_columns(const FeatureMatrix& x) {
    SortedColumns columns(x.cols);
    std::vector<std::int32_t> base(x.rows);
    std::iota(base.begin(), base.end(), std::int32_t{0});
    for (std::size_t f = 0; f < x.cols; ++f) {
        columns[f] = base;
        std::sort(columns[f].begin(), columns[f].end(), [&](std::int32_t a, std::int32_t b) {
            const double va = x.row(static_cast<std::size_t>(a))[f];
            const double vb = x.row(static_cast<std::size_t>(b))[f];
            if (va != vb) return va < vb;
            return a < b;
        });
    }
    return columns;
}

void RegressionTree::fit(const FeatureMatrix& x, const std::vector<double>& y, std::vector<std::int32_t> rows,
                         const TreeConfig& config, Rng& rng) {
    if (x.rows == 0 || x.cols == 0) throw ContractViolation("regression tree needs a non-empty matrix");
    if (y.size() != x.rows) throw ContractViolation("target length does not match matrix rows");
    if (rows.empty()) throw ContractViolation("regression tree needs at least one training row");
    if (config.min_leaf == 0) throw ContractViolation("min_leaf must be at least 1");
    nodes_.clear();

    struct Frame {
        std::vector<std::int32_t> rows;
        std::size_t depth;
        std::size_t index;
    };
    std::vector<Frame> stack;
    nodes_.emplace_back();
    stack.push_back({std::move(rows), 0, 0});
    const std::size_t k = config.feature_subsample == 0 ? x.cols : std::min(config.feature_subsample, x.cols);

    std::vector<std::int32_t> ordered;
    while (!stack.empty()) {
        Frame frame = std::move(stack.back());
        stack.pop_back();

        SplitChoice best;
        if (frame.depth < config.max_depth && frame.rows.size() >= 2 * config.min_leaf) {
            for (std::size_t f : sample_features(x.cols, k, rng)) {
                ordered = frame.rows;
                std::sort(ordered.begin(), ordered.end(), [&](std::int32_t a, std::int32_t b) {
                    const double va = x.row(static_cast<std::size_t>(a))[f];
                    const double vb = x.row(static_cast<std::size_t>(b))[f];
                    if (va != vb) return va < vb;
                    return a < b;
                });
                scan_ordered(x, y, ordered, f, config.min_leaf, best);
            }
        }
        if (!improves(best, y, frame.rows)) {
            nodes_[frame.index].rows = std::move(frame.rows);
            continue;
        }

        std::vector<std::int32_t> left, right;
        left.reserve(best.left_count);
        right.reserve(frame.rows.size() - best.left_count);
        for (std::int32_t r : frame.rows) {
            if (x.row(static_cast<std::size_t>(r))[best.feature] < best.threshold) {
                left.push_back(r);
            } else {
                right.push_back(r);
            }
        }

        const std::size_t left_index = nodes_.size();
        nodes_.emplace_back();
        const std::size_t right_index = nodes_.size();
        nodes_.emplace_back();
        nodes_[frame.index].feature = static_cast<std::int32_t>(best.feature);
        nodes_[frame.index].threshold = best.threshold;
        nodes_[frame.index].left = static_cast<std::int32_t>(left_index);
        nodes_[frame.index].right = static_cast<std::int32_t>(right_index);
        stack.push_back({std::move(right), frame.depth + 1, right_index});
        stack.push_back({std::move(left), frame.depth + 1, left_index});
    }
}

void RegressionTree::fit_presorted(const FeatureMatrix& x, const std::vector<double>& y,
                                   const SortedColumns& columns, const TreeConfig& config, Rng& rng) {
    if (x.rows == 0 || x.cols == 0) throw ContractViolation("regression tree needs a non-empty matrix");
    if (y.size() != x.rows) throw ContractViolation("target length does not match matrix rows");
    if (columns.size() != x.cols) throw ContractViolation("sorted columns do not match matrix width");
    if (config.min_leaf == 0) throw ContractViolation("min_leaf must be at least 1");
    nodes_.clear();

    struct Frame {
        SortedColumns columns;
        std::size_t depth;
        std::size_t index;
    };
    std::vector<Frame> stack;
    nodes_.emplace_back();
    stack.push_back({columns, 0, 0});
    const std::size_t k = config.feature_subsample == 0 ? x.cols : std::min(config.feature_subsample, x.cols);
    std::vector<char> go_left(x.rows, 0);

    while (!stack.empty()) {
        Frame frame = std::move(stack.back());
        stack.pop_back();
        const std::size_t m = frame.columns.front().size();

        SplitChoice best;
        if (frame.depth < config.max_depth && m >= 2 * config.min_leaf) {
            for (std::size_t f : sample_features(x.cols, k, rng)) {
                scan_ordered(x, y, frame.columns[f], f, config.min_leaf, best);
            }
        }
        if (!improves(best, y, frame.columns.front())) {
            nodes_[frame.index].rows = std::move(frame.columns.front());
            continue;
        }

        for (std::int32_t r : frame.columns[best.feature]) {
            go_left[static_cast<std::size_t>(r)] =
                x.row(static_cast<std::size_t>(r))[best.feature] < best.threshold ? 1 : 0;
        }
        Frame left{SortedColumns(x.cols), frame.depth + 1, 0};
        Frame right{SortedColumns(x.cols), frame.depth + 1, 0};
        for (std::size_t f = 0; f < x.cols; ++f) {
            left.columns[f].reserve(best.left_count);
            right.columns[f].reserve(m - best.left_count);
            for (std::int32_t r : frame.columns[f]) {
                if (go_left[static_cast<std::size_t>(r)]) {
                    left.columns[f].push_back(r);
                } else {
                    right.columns[f].push_back(r);
                }
            }
        }

        const std::size_t left_index = nodes_.size();
        nodes_.emplace_back();
        const std::size_t right_index = nodes_.size();
        nodes_.emplace_back();
        nodes_[frame.index].feature = static_cast<std::int32_t>(best.feature);
        nodes_[frame.index].threshold = best.threshold;
        nodes_[frame.index].left = static_cast<std::int32_t>(left_index);
        nodes_[frame.index].right = static_cast<std::int32_t>(right_index);
        left.index = left_index;
        right.index = right_index;
        stack.push_back(std::move(right));
        stack.push_back(std::move(left));
    }
}

std::size_t RegressionTree::leaf_index(const double* x) const {
    if (nodes_.empty()) throw ContractViolation("tree is not fitted");
    std::size_t i = 0;
    while (nodes_[i].feature >= 0) {
        const TreeNode& n = nodes_[i];
        i = static_cast<std::size_t>(x[n.feature] < n.threshold ? n.left : n.right);
    }
    return i;
}

RegressionTree RegressionTree::from_nodes(std::vector<TreeNode> nodes) {
    RegressionTree t;
    t.nodes_ = std::move(nodes);
    return t;
}

}  // namespace stanp

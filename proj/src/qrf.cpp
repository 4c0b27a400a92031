#include "stanp/qrf.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "stanp/errors.hpp"
#include "stanp/parallel.hpp"

namespace stanp {

void QuantileForest::fit(const FeatureMatrix& x, std::vector<double> y, const QrfConfig& config) {
    if (x.rows == 0 || x.cols == 0) throw ContractViolation("forest needs a non-empty feature matrix");
    if (y.size() != x.rows) throw ContractViolation("target length does not match matrix rows");
    if (config.trees == 0) throw ContractViolation("forest needs at least one tree");
    if (config.tree.min_leaf == 0) throw ContractViolation("min_leaf must be at least 1");

    cfg_ = config;
    if (cfg_.tree.feature_subsample == 0) {
        cfg_.tree.feature_subsample = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(x.cols)))));
    }
    n_features_ = x.cols;
    y_ = std::move(y);
    trees_.assign(cfg_.trees, RegressionTree{});

    const std::size_t n = x.rows;
    parallel_for(cfg_.trees, static_cast<unsigned>(cfg_.jobs), [&](std::size_t t) {
        Rng rng = Rng::from_tag(cfg_.seed, static_cast<std::uint64_t>(t));
        std::vector<std::int32_t> bag(n);
        for (std::size_t i = 0; i < n; ++i) bag[i] = static_cast<std::int32_t>(rng.uniform_index(n));
        trees_[t].fit(x, y_, std::move(bag), cfg_.tree, rng);
    });
}

std::vector<WeightedValue> QuantileForest::pooled(const double* x) const {
    if (!fitted()) throw ContractViolation("forest is not fitted");
    std::vector<WeightedValue> pool;
    const double inv_trees = 1.0 / static_cast<double>(trees_.size());
    for (const RegressionTree& tree : trees_) {
        const TreeNode& leaf = tree.nodes()[tree.leaf_index(x)];
        const double w = inv_trees / static_cast<double>(leaf.rows.size());
        for (std::int32_t r : leaf.rows) pool.push_back({y_[static_cast<std::size_t>(r)], w});
    }
    return pool;
}

double QuantileForest::predict_quantile(const double* x, double q) const {
    return weighted_quantile(pooled(x), q);
}

QuantileTriple QuantileForest::predict_triple(const double* x) const {
    std::vector<WeightedValue> pool = pooled(x);
    double total = 0.0;
    for (const WeightedValue& s : pool) total += s.weight;
    std::sort(pool.begin(), pool.end(),
              [](const WeightedValue& a, const WeightedValue& b) { return a.value < b.value; });
    QuantileTriple t;
    t.q16 = weighted_quantile_sorted(pool, total, 0.16);
    t.q50 = weighted_quantile_sorted(pool, total, 0.50);
    t.q84 = weighted_quantile_sorted(pool, total, 0.84);
    return t;
}

QuantileForest QuantileForest::from_parts(QrfConfig cfg, std::size_t n_features, std::vector<double> y,
                                          std::vector<RegressionTree> trees) {
    QuantileForest f;
    f.cfg_ = std::move(cfg);
    f.n_features_ = n_features;
    f.y_ = std::move(y);
    f.trees_ = std::move(trees);
    return f;
}

namespace {

std::string tree_key(std::size_t t, const char* field) { return "t" + std::to_string(t) + "." + field; }

ckpt::Entry i32_entry(std::string name, std::vector<std::int32_t> data) {
    ckpt::Entry e;
    e.name = std::move(name);
    e.dtype = ckpt::Dtype::i32;
    e.shape = {data.size()};
    e.i32 = std::move(data);
    return e;
}

ckpt::Entry f32_entry(std::string name, std::vector<float> data) {
    ckpt::Entry e;
    e.name = std::move(name);
    e.dtype = ckpt::Dtype::f32;
    e.shape = {data.size()};
    e.f32 = std::move(data);
    return e;
}

}  // namespace

ckpt::Container qrf_to_container(const QuantileForest& forest) {
    if (!forest.fitted()) throw ContractViolation("cannot serialize an unfitted forest");
    ckpt::Container c;
    c.kind = 2;
    const QrfConfig& cfg = forest.config();
    c.header = {
        {"trees", static_cast<double>(cfg.trees)},
        {"max_depth", static_cast<double>(cfg.tree.max_depth)},
        {"min_leaf", static_cast<double>(cfg.tree.min_leaf)},
        {"feature_subsample", static_cast<double>(cfg.tree.feature_subsample)},
        {"seed", static_cast<double>(cfg.seed)},
        {"features", static_cast<double>(forest.feature_count())},
    };

    std::vector<float> y32(forest.targets().begin(), forest.targets().end());
    c.entries.push_back(f32_entry("y", std::move(y32)));

    for (std::size_t t = 0; t < forest.trees().size(); ++t) {
        const std::vector<TreeNode>& nodes = forest.trees()[t].nodes();
        std::vector<std::int32_t> feature, left, right, leaf_start, leaf_len, rows;
        std::vector<float> threshold;
        for (const TreeNode& n : nodes) {
            feature.push_back(n.feature);
            left.push_back(n.left);
            right.push_back(n.right);
            threshold.push_back(static_cast<float>(n.threshold));
            leaf_start.push_back(static_cast<std::int32_t>(rows.size()));
            leaf_len.push_back(static_cast<std::int32_t>(n.rows.size()));
            rows.insert(rows.end(), n.rows.begin(), n.rows.end());
        }
        c.entries.push_back(i32_entry(tree_key(t, "feature"), std::move(feature)));
        c.entries.push_back(i32_entry(tree_key(t, "left"), std::move(left)));
        c.entries.push_back(i32_entry(tree_key(t, "right"), std::move(right)));
        c.entries.push_back(f32_entry(tree_key(t, "threshold"), std::move(threshold)));
        c.entries.push_back(i32_entry(tree_key(t, "leaf_start"), std::move(leaf_start)));
        c.entries.push_back(i32_entry(tree_key(t, "leaf_len"), std::move(leaf_len)));
        c.entries.push_back(i32_entry(tree_key(t, "rows"), std::move(rows)));
    }
    return c;
}

QuantileForest qrf_from_container(const ckpt::Container& c) {
    if (c.kind != 2) throw FormatError("checkpoint kind " + std::to_string(c.kind) + " is not a quantile forest");
    QrfConfig cfg;
    cfg.trees = static_cast<std::size_t>(c.header_value("trees"));
    cfg.tree.max_depth = static_cast<std::size_t>(c.header_value("max_depth"));
    cfg.tree.min_leaf = static_cast<std::size_t>(c.header_value("min_leaf"));
    cfg.tree.feature_subsample = static_cast<std::size_t>(c.header_value("feature_subsample"));
    cfg.seed = static_cast<std::uint64_t>(c.header_value("seed"));
    const std::size_t n_features = static_cast<std::size_t>(c.header_value("features"));

    const ckpt::Entry& ye = c.entry("y");
    std::vector<double> y(ye.f32.begin(), ye.f32.end());

    std::vector<RegressionTree> trees;
    trees.reserve(cfg.trees);
    for (std::size_t t = 0; t < cfg.trees; ++t) {
        const ckpt::Entry& feature = c.entry(tree_key(t, "feature"));
        const ckpt::Entry& left = c.entry(tree_key(t, "left"));
        const ckpt::Entry& right = c.entry(tree_key(t, "right"));
        const ckpt::Entry& threshold = c.entry(tree_key(t, "threshold"));
        const ckpt::Entry& leaf_start = c.entry(tree_key(t, "leaf_start"));
        const ckpt::Entry& leaf_len = c.entry(tree_key(t, "leaf_len"));
        const ckpt::Entry& rows = c.entry(tree_key(t, "rows"));
        const std::size_t n_nodes = feature.i32.size();
        if (left.i32.size() != n_nodes || right.i32.size() != n_nodes || threshold.f32.size() != n_nodes ||
            leaf_start.i32.size() != n_nodes || leaf_len.i32.size() != n_nodes) {
            throw FormatError("tree " + std::to_string(t) + " arrays disagree on node count");
        }
        std::vector<TreeNode> nodes(n_nodes);
        for (std::size_t i = 0; i < n_nodes; ++i) {
            nodes[i].feature = feature.i32[i];
            nodes[i].left = left.i32[i];
            nodes[i].right = right.i32[i];
            nodes[i].threshold = static_cast<double>(threshold.f32[i]);
            const std::size_t start = static_cast<std::size_t>(leaf_start.i32[i]);
            const std::size_t len = static_cast<std::size_t>(leaf_len.i32[i]);
            if (start + len > rows.i32.size()) {
                throw FormatError("tree " + std::to_string(t) + " leaf rows overflow the row array");
            }
            nodes[i].rows.assign(rows.i32.begin() + static_cast<std::ptrdiff_t>(start),
                                 rows.i32.begin() + static_cast<std::ptrdiff_t>(start + len));
        }
        trees.push_back(RegressionTree::from_nodes(std::move(nodes)));
    }
    return QuantileForest::from_parts(cfg, n_features, std::move(y), std::move(trees));
}

void save_qrf(const QuantileForest& forest, const std::string& path) {
    ckpt::write_container(qrf_to_container(forest), path);
}

QuantileForest load_qrf(const std::string& path) { return qrf_from_container(ckpt::read_container(path)); }

}  // namespace stanp

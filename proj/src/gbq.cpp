#include "stanp/gbq.hpp"

#include <string>

#include "stanp/errors.hpp"

namespace stanp {

namespace {

double mean_pinball(const std::vector<double>& y, const std::vector<double>& pred, double q) {
    double total = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) total += pinball_loss(y[i], pred[i], q);
    return total / static_cast<double>(y.size());
}

}  // namespace

void BoostedQuantile::fit(const FeatureMatrix& x, const std::vector<double>& y, double q,
                          const GbqConfig& config) {
    if (x.rows == 0 || x.cols == 0) throw ContractViolation("boosting needs a non-empty feature matrix");
    if (y.size() != x.rows) throw ContractViolation("target length does not match matrix rows");
    if (!(q > 0.0 && q < 1.0)) throw ContractViolation("quantile level must lie in (0, 1)");
    if (!(config.learning_rate > 0.0)) throw ContractViolation("learning rate must be positive");
    if (config.tree.min_leaf == 0) throw ContractViolation("min_leaf must be at least 1");

    cfg_ = config;
    q_ = q;
    n_features_ = x.cols;
    trees_.clear();
    leaf_values_.clear();
    pinball_.clear();

    init_ = empirical_quantile(y, q);
    std::vector<double> pred(x.rows, init_);
    pinball_.push_back(mean_pinball(y, pred, q));

    const SortedColumns columns = sort_columns(x);
    std::vector<double> pseudo(x.rows);
    for (std::size_t round = 0; round < cfg_.rounds; ++round) {
        for (std::size_t i = 0; i < x.rows; ++i) pseudo[i] = y[i] > pred[i] ? q : q - 1.0;

        Rng rng = Rng::from_tag(cfg_.seed, static_cast<std::uint64_t>(round));
        RegressionTree tree;
        tree.fit_presorted(x, pseudo, columns, cfg_.tree, rng);

        std::vector<double> values(tree.nodes().size(), 0.0);
        for (std::size_t n = 0; n < tree.nodes().size(); ++n) {
            const TreeNode& node = tree.nodes()[n];
            if (node.feature >= 0) continue;
            std::vector<double> residuals;
            residuals.reserve(node.rows.size());
            for (std::int32_t r : node.rows) {
                residuals.push_back(y[static_cast<std::size_t>(r)] - pred[static_cast<std::size_t>(r)]);
            }
            const double step = empirical_quantile(std::move(residuals), q);
            values[n] = step;
            for (std::int32_t r : node.rows) pred[static_cast<std::size_t>(r)] += cfg_.learning_rate * step;
        }
        trees_.push_back(std::move(tree));
        leaf_values_.push_back(std::move(values));
        pinball_.push_back(mean_pinball(y, pred, q));
    }
    fitted_ = true;
}

double BoostedQuantile::predict(const double* x) const {
    if (!fitted_) throw ContractViolation("boosted model is not fitted");
    double out = init_;
    for (std::size_t t = 0; t < trees_.size(); ++t) {
        out += cfg_.learning_rate * leaf_values_[t][trees_[t].leaf_index(x)];
    }
    return out;
}

BoostedQuantile BoostedQuantile::from_parts(GbqConfig cfg, double q, double init, std::size_t n_features,
                                            std::vector<RegressionTree> trees,
                                            std::vector<std::vector<double>> leaf_values) {
    BoostedQuantile m;
    m.cfg_ = std::move(cfg);
    m.q_ = q;
    m.init_ = init;
    m.n_features_ = n_features;
    m.trees_ = std::move(trees);
    m.leaf_values_ = std::move(leaf_values);
    m.fitted_ = true;
    return m;
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

ckpt::Container gbq_to_container(const BoostedQuantile& model) {
    if (!model.fitted()) throw ContractViolation("cannot serialize an unfitted model");
    ckpt::Container c;
    c.kind = 3;
    const GbqConfig& cfg = model.config();
    c.header = {
        {"rounds", static_cast<double>(cfg.rounds)},
        {"learning_rate", cfg.learning_rate},
        {"max_depth", static_cast<double>(cfg.tree.max_depth)},
        {"min_leaf", static_cast<double>(cfg.tree.min_leaf)},
        {"seed", static_cast<double>(cfg.seed)},
        {"quantile", model.quantile_level()},
        {"init", model.init_value()},
        {"features", static_cast<double>(model.feature_count())},
    };
    for (std::size_t t = 0; t < model.trees().size(); ++t) {
        const std::vector<TreeNode>& nodes = model.trees()[t].nodes();
        std::vector<std::int32_t> feature, left, right;
        std::vector<float> threshold, values;
        for (std::size_t n = 0; n < nodes.size(); ++n) {
            feature.push_back(nodes[n].feature);
            left.push_back(nodes[n].left);
            right.push_back(nodes[n].right);
            threshold.push_back(static_cast<float>(nodes[n].threshold));
            values.push_back(static_cast<float>(model.leaf_values()[t][n]));
        }
        c.entries.push_back(i32_entry(tree_key(t, "feature"), std::move(feature)));
        c.entries.push_back(i32_entry(tree_key(t, "left"), std::move(left)));
        c.entries.push_back(i32_entry(tree_key(t, "right"), std::move(right)));
        c.entries.push_back(f32_entry(tree_key(t, "threshold"), std::move(threshold)));
        c.entries.push_back(f32_entry(tree_key(t, "leaf_value"), std::move(values)));
    }
    return c;
}

BoostedQuantile gbq_from_container(const ckpt::Container& c) {
    if (c.kind != 3) throw FormatError("checkpoint kind " + std::to_string(c.kind) + " is not a boosted model");
    GbqConfig cfg;
    cfg.rounds = static_cast<std::size_t>(c.header_value("rounds"));
    cfg.learning_rate = c.header_value("learning_rate");
    cfg.tree.max_depth = static_cast<std::size_t>(c.header_value("max_depth"));
    cfg.tree.min_leaf = static_cast<std::size_t>(c.header_value("min_leaf"));
    cfg.seed = static_cast<std::uint64_t>(c.header_value("seed"));
    const double q = c.header_value("quantile");
    const double init = c.header_value("init");
    const std::size_t n_features = static_cast<std::size_t>(c.header_value("features"));

    std::vector<RegressionTree> trees;
    std::vector<std::vector<double>> leaf_values;
    trees.reserve(cfg.rounds);
    for (std::size_t t = 0; t < cfg.rounds; ++t) {
        const ckpt::Entry& feature = c.entry(tree_key(t, "feature"));
        const ckpt::Entry& left = c.entry(tree_key(t, "left"));
        const ckpt::Entry& right = c.entry(tree_key(t, "right"));
        const ckpt::Entry& threshold = c.entry(tree_key(t, "threshold"));
        const ckpt::Entry& values = c.entry(tree_key(t, "leaf_value"));
        const std::size_t n_nodes = feature.i32.size();
        if (left.i32.size() != n_nodes || right.i32.size() != n_nodes || threshold.f32.size() != n_nodes ||
            values.f32.size() != n_nodes) {
            throw FormatError("tree " + std::to_string(t) + " arrays disagree on node count");
        }
        std::vector<TreeNode> nodes(n_nodes);
        std::vector<double> vals(n_nodes);
        for (std::size_t i = 0; i < n_nodes; ++i) {
            nodes[i].feature = feature.i32[i];
            nodes[i].left = left.i32[i];
            nodes[i].right = right.i32[i];
            nodes[i].threshold = static_cast<double>(threshold.f32[i]);
            vals[i] = static_cast<double>(values.f32[i]);
        }
        trees.push_back(RegressionTree::from_nodes(std::move(nodes)));
        leaf_values.push_back(std::move(vals));
    }
    return BoostedQuantile::from_parts(cfg, q, init, n_features, std::move(trees), std::move(leaf_values));
}

void save_gbq(const BoostedQuantile& model, const std::string& path) {
    ckpt::write_container(gbq_to_container(model), path);
}

BoostedQuantile load_gbq(const std::string& path) { return gbq_from_container(ckpt::read_container(path)); }

}  // namespace stanp

#pragma once

#include <cstdint>
#include <vector>

#include "stanp/cart.hpp"
#include "stanp/checkpoint.hpp"
#include "stanp/quantiles.hpp"

namespace stanp {

struct GbqConfig {
    std::size_t rounds = 300;
    double learning_rate = 0.1;
    TreeConfig tree{4, 5, 0};  // all features per node
    std::uint64_t seed = 0;
};

// Gradient-boosted pinball regression for one quantile level. The prediction
// starts at the empirical q-quantile of the targets; each round fits a CART
// tree to the pinball subgradient and replaces leaf values with the empirical
// q-quantile of the leaf's current residuals.
class BoostedQuantile {
public:
    void fit(const FeatureMatrix& x, const std::vector<double>& y, double q, const GbqConfig& config);

    double predict(const double* x) const;

    bool fitted() const { return fitted_; }
    double quantile_level() const { return q_; }
    double init_value() const { return init_; }
    const GbqConfig& config() const { return cfg_; }
    std::size_t feature_count() const { return n_features_; }

    // mean training pinball after each round; entry 0 is the constant model
    const std::vector<double>& training_pinball() const { return pinball_; }

    const std::vector<RegressionTree>& trees() const { return trees_; }
    const std::vector<std::vector<double>>& leaf_values() const { return leaf_values_; }

    static BoostedQuantile from_parts(GbqConfig cfg, double q, double init, std::size_t n_features,
                                      std::vector<RegressionTree> trees,
                                      std::vector<std::vector<double>> leaf_values);

private:
    GbqConfig cfg_;
    bool fitted_ = false;
    double q_ = 0.5;
    double init_ = 0.0;
    std::size_t n_features_ = 0;
    std::vector<RegressionTree> trees_;
    std::vector<std::vector<double>> leaf_values_;  // per round, indexed by node id
    std::vector<double> pinball_;
};

ckpt::Container gbq_to_container(const BoostedQuantile& model);
BoostedQuantile gbq_from_container(const ckpt::Container& c);
void save_gbq(const BoostedQuantile& model, const std::string& path);
BoostedQuantile load_gbq(const std::string& path);

}  // namespace stanp

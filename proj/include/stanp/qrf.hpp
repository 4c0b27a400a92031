#pragma once

#include <cstdint>
#include <vector>

#include "stanp/cart.hpp"
#include "stanp/checkpoint.hpp"
#include "stanp/quantiles.hpp"

namespace stanp {

struct QrfConfig {
    std::size_t trees = 200;
    TreeConfig tree{12, 5, 0};  // feature_subsample 0 resolves to round(sqrt(p)) at fit
    std::uint64_t seed = 0;
    std::size_t jobs = 1;
};

// Quantile regression forest: bagged CART trees whose leaves retain raw
// target values. Prediction pools every reachable leaf's values, each entry
// weighted 1/(trees * |leaf|), and reads quantiles off the pooled multiset.
class QuantileForest {
public:
    void fit(const FeatureMatrix& x, std::vector<double> y, const QrfConfig& config);

    std::vector<WeightedValue> pooled(const double* x) const;
    double predict_quantile(const double* x, double q) const;
    QuantileTriple predict_triple(const double* x) const;  // q16 / q50 / q84 in one pooling pass

    bool fitted() const { return !trees_.empty(); }
    const QrfConfig& config() const { return cfg_; }
    std::size_t feature_count() const { return n_features_; }
    const std::vector<double>& targets() const { return y_; }
    const std::vector<RegressionTree>& trees() const { return trees_; }

    static QuantileForest from_parts(QrfConfig cfg, std::size_t n_features, std::vector<double> y,
                                     std::vector<RegressionTree> trees);

private:
    QrfConfig cfg_;
    std::size_t n_features_ = 0;
    std::vector<double> y_;
    std::vector<RegressionTree> trees_;
};

ckpt::Container qrf_to_container(const QuantileForest& forest);
QuantileForest qrf_from_container(const ckpt::Container& c);
void save_qrf(const QuantileForest& forest, const std::string& path);
QuantileForest load_qrf(const std::string& path);

}  // namespace stanp

#pragma once

#include <cstddef>
#include <vector>

#include "stanp/model.hpp"

namespace stanp {

struct WeightedValue {
    double value = 0.0;
    double weight = 0.0;
};

// Weighted empirical quantile. Samples are sorted by value and each is placed
// at the midpoint of its cumulative weight span: s_i = (cum_i - w_i/2) / W.
// q at or below s_0 returns the minimum, q at or above s_last the maximum,
// anything between is linearly interpolated. Weights must be positive.
double weighted_quantile(std::vector<WeightedValue> samples, double q);

// Same convention on samples already sorted by value, for callers reading
// several levels off one pooled multiset.
double weighted_quantile_sorted(const std::vector<WeightedValue>& sorted, double total_weight, double q);

// Unweighted convenience wrapper, same convention with w_i = 1.
double empirical_quantile(std::vector<double> values, double q);

// L_q(y, p) = (y - p) q       if y >= p
//             (p - y) (1 - q) otherwise
double pinball_loss(double y, double prediction, double q);

enum class MuConvention {
    Median,    // mu = q50
    Midpoint,  // mu = (q16 + q84) / 2, for predictors without a median head
};

struct QuantileTriple {
    double q16 = 0.0;
    double q50 = 0.0;
    double q84 = 0.0;
};

// Maps a (q16, q50, q84) triple onto a Gaussian: sigma = (q84 - q16) / 2,
// floored. Crossed quantiles (q84 < q16) collapse to their midpoint with the
// floor sigma and bump the counter.
model::PredictiveGaussian quantiles_to_gaussian(const QuantileTriple& q, double sigma_floor,
                                                MuConvention convention, std::size_t* crossing_count = nullptr);

}  // namespace stanp

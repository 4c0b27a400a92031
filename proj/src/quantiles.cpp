#include "stanp/quantiles.hpp"

#include <algorithm>
#include <cmath>

#include "stanp/errors.hpp"

namespace stanp {

double weighted_quantile_sorted(const std::vector<WeightedValue>& sorted, double total_weight, double q) {
    if (sorted.empty()) throw ContractViolation("weighted_quantile needs at least one sample");
    if (!(q >= 0.0 && q <= 1.0)) throw ContractViolation("quantile level must lie in [0, 1]");
    if (!(total_weight > 0.0)) throw ContractViolation("total weight must be positive");

    // midpoint positions of each sample's cumulative weight span
    double cum = 0.0;
    double prev_pos = 0.0;
    double prev_value = sorted.front().value;
    bool first = true;
    for (const WeightedValue& s : sorted) {
        cum += s.weight;
        const double pos = (cum - 0.5 * s.weight) / total_weight;
        if (first) {
            if (q <= pos) return s.value;
            first = false;
        } else if (q <= pos) {
            const double span = pos - prev_pos;
            if (span <= 0.0) return s.value;
            const double t = (q - prev_pos) / span;
            return prev_value + t * (s.value - prev_value);
        }
        prev_pos = pos;
        prev_value = s.value;
    }
    return sorted.back().value;
}

double weighted_quantile(std::vector<WeightedValue> samples, double q) {
    if (samples.empty()) throw ContractViolation("weighted_quantile needs at least one sample");
    double total = 0.0;
    for (const WeightedValue& s : samples) {
        if (!(s.weight > 0.0)) throw ContractViolation("weighted_quantile weights must be positive");
        total += s.weight;
    }
    std::sort(samples.begin(), samples.end(), [](const WeightedValue& a, const WeightedValue& b) {
        return a.value < b.value;
    });
    return weighted_quantile_sorted(samples, total, q);
}

double empirical_quantile(std::vector<double> values, double q) {
    std::vector<WeightedValue> weighted;
    weighted.reserve(values.size());
    for (double v : values) weighted.push_back({v, 1.0});
    return weighted_quantile(std::move(weighted), q);
}

double pinball_loss(double y, double prediction, double q) {
    if (!(q > 0.0 && q < 1.0)) throw ContractViolation("pinball loss level must lie in (0, 1)");
    if (y >= prediction) return (y - prediction) * q;
    return (prediction - y) * (1.0 - q);
}

model::PredictiveGaussian quantiles_to_gaussian(const QuantileTriple& q, double sigma_floor,
                                                MuConvention convention, std::size_t* crossing_count) {
    if (!(sigma_floor > 0.0)) throw ContractViolation("sigma floor must be positive");
    model::PredictiveGaussian out;
    if (q.q84 < q.q16) {
        const double mid = 0.5 * (q.q16 + q.q84);
        out.mu = mid;
        out.sigma = sigma_floor;
        if (crossing_count != nullptr) ++*crossing_count;
        return out;
    }
    out.mu = convention == MuConvention::Median ? q.q50 : 0.5 * (q.q16 + q.q84);
    out.sigma = std::max(0.5 * (q.q84 - q.q16), sigma_floor);
    return out;
}

}  // namespace stanp

#pragma once

#include <map>
#include <string>
#include <vector>

namespace stanp {

struct ZStats {
    double mean = 0.0;
    double std = 0.0;  // population, divisor n
};

// z_i = (y_i - mu_i) / sigma_i. Needs n >= 2 and every sigma > 0.
ZStats z_stats(const std::vector<double>& y, const std::vector<double>& mu, const std::vector<double>& sigma);

// Fraction with |y_i - mu_i| <= k * sigma_i; the boundary counts as covered.
double coverage(const std::vector<double>& y, const std::vector<double>& mu, const std::vector<double>& sigma,
                double k);

struct AccuracyMetrics {
    double log_r2 = 0.0;
    double log_rmse = 0.0;
    double linear_rmse = 0.0;  // Mg/ha
    double linear_mae = 0.0;   // Mg/ha
    bool r2_defined = true;    // false when the targets have zero variance
};

// Log metrics in normalized log space; linear metrics after the naive
// back-transform to Mg/ha applied to both targets and predictions.
AccuracyMetrics accuracy_metrics(const std::vector<double>& y_norm, const std::vector<double>& mu_norm);

enum class Stratum : int { Stable = 0, Moderate = 1, Disturbed = 2 };

const char* stratum_name(Stratum s);

struct DisturbanceRecord {
    int tile_id = -1;
    double ybar_exp = 0.0;   // mean of pre- and post-year means, Mg/ha
    double ybar_test = 0.0;  // test-year mean, Mg/ha
    double delta = 0.0;
    Stratum stratum = Stratum::Stable;
    bool available = true;  // false when pre, post, or test-year means are missing
};

// delta = (ybar_exp - ybar_test) / ybar_exp over per-year tile means.
// Thresholds: Stable delta < 0.1, Moderate 0.1 <= delta <= 0.3, Disturbed
// delta > 0.3; biomass gain gives delta < 0 and lands in Stable.
DisturbanceRecord disturbance_delta(const std::map<int, double>& yearly_means, int test_year, int tile_id);

struct PooledR2 {
    double value = 0.0;
    bool defined = false;
    std::size_t n = 0;
};

// 1 - SSE/SST over the pooled pairs; undefined for n < 2 or zero variance.
PooledR2 pooled_r2(const std::vector<double>& y, const std::vector<double>& predicted);

}  // namespace stanp

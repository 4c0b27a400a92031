#include "stanp/metrics.hpp"

#include <cmath>
#include <limits>

#include "stanp/coords.hpp"
#include "stanp/errors.hpp"

namespace stanp {

namespace {

void check_triplet(const std::vector<double>& y, const std::vector<double>& mu,
                   const std::vector<double>& sigma) {
    if (y.size() != mu.size() || y.size() != sigma.size()) {
        throw ContractViolation("y, mu, and sigma must have equal length");
    }
    if (y.size() < 2) throw ContractViolation("calibration metrics need at least 2 points");
    for (double s : sigma) {
        if (!(s > 0.0)) throw ContractViolation("every sigma must be positive");
    }
}

}  // namespace

ZStats z_stats(const std::vector<double>& y, const std::vector<double>& mu, const std::vector<double>& sigma) {
    check_triplet(y, mu, sigma);
    const std::size_t n = y.size();
    double sum = 0.0;
    std::vector<double> z(n);
    for (std::size_t i = 0; i < n; ++i) {
        z[i] = (y[i] - mu[i]) / sigma[i];
        sum += z[i];
    }
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (double zi : z) ss += (zi - mean) * (zi - mean);
    return {mean, std::sqrt(ss / static_cast<double>(n))};
}

double coverage(const std::vector<double>& y, const std::vector<double>& mu, const std::vector<double>& sigma,
                double k) {
    check_triplet(y, mu, sigma);
    if (!(k > 0.0)) throw ContractViolation("coverage multiplier must be positive");
    std::size_t inside = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (std::abs(y[i] - mu[i]) <= k * sigma[i]) ++inside;
    }
    return static_cast<double>(inside) / static_cast<double>(y.size());
}

AccuracyMetrics accuracy_metrics(const std::vector<double>& y_norm, const std::vector<double>& mu_norm) {
    if (y_norm.size() != mu_norm.size()) throw ContractViolation("target and prediction lengths differ");
    if (y_norm.size() < 2) throw ContractViolation("accuracy metrics need at least 2 points");
    const std::size_t n = y_norm.size();
    const double dn = static_cast<double>(n);

    double mean_y = 0.0;
    for (double v : y_norm) mean_y += v;
    mean_y /= dn;

    double sse = 0.0, sst = 0.0, lin_sq = 0.0, lin_abs = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double e = y_norm[i] - mu_norm[i];
        sse += e * e;
        sst += (y_norm[i] - mean_y) * (y_norm[i] - mean_y);
        const double lin_e = norm_to_agbd(y_norm[i]) - norm_to_agbd(mu_norm[i]);
        lin_sq += lin_e * lin_e;
        lin_abs += std::abs(lin_e);
    }

    AccuracyMetrics m;
    m.log_rmse = std::sqrt(sse / dn);
    m.linear_rmse = std::sqrt(lin_sq / dn);
    m.linear_mae = lin_abs / dn;
    if (sst > 0.0) {
        m.log_r2 = 1.0 - sse / sst;
    } else {
        m.log_r2 = std::numeric_limits<double>::quiet_NaN();
        m.r2_defined = false;
    }
    return m;
}

const char* stratum_name(Stratum s) {
    switch (s) {
        case Stratum::Stable: return "Stable";
        case Stratum::Moderate: return "Moderate";
        case Stratum::Disturbed: return "Disturbed";
    }
    return "unknown";
}

DisturbanceRecord disturbance_delta(const std::map<int, double>& yearly_means, int test_year, int tile_id) {
    DisturbanceRecord rec;
    rec.tile_id = tile_id;

    double pre_sum = 0.0, post_sum = 0.0;
    std::size_t pre_n = 0, post_n = 0;
    bool have_test = false;
    for (const auto& [year, mean] : yearly_means) {
        if (year < test_year) {
            pre_sum += mean;
            ++pre_n;
        } else if (year > test_year) {
            post_sum += mean;
            ++post_n;
        } else {
            rec.ybar_test = mean;
            have_test = true;
        }
    }
    if (pre_n == 0 || post_n == 0 || !have_test) {
        rec.available = false;
        return rec;
    }
    // unweighted mean over all pre- and post-year means
    rec.ybar_exp = (pre_sum + post_sum) / static_cast<double>(pre_n + post_n);
    if (!(rec.ybar_exp > 0.0)) {
        rec.available = false;
        return rec;
    }
    rec.delta = (rec.ybar_exp - rec.ybar_test) / rec.ybar_exp;
    if (rec.delta < 0.1) {
        rec.stratum = Stratum::Stable;
    } else if (rec.delta <= 0.3) {
        rec.stratum = Stratum::Moderate;
    } else {
        rec.stratum = Stratum::Disturbed;
    }
    return rec;
}

PooledR2 pooled_r2(const std::vector<double>& y, const std::vector<double>& predicted) {
    if (y.size() != predicted.size()) throw ContractViolation("target and prediction lengths differ");
    PooledR2 out;
    out.n = y.size();
    if (y.size() < 2) return out;
    double mean_y = 0.0;
    for (double v : y) mean_y += v;
    mean_y /= static_cast<double>(y.size());
    double sse = 0.0, sst = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        sse += (y[i] - predicted[i]) * (y[i] - predicted[i]);
        sst += (y[i] - mean_y) * (y[i] - mean_y);
    }
    if (!(sst > 0.0)) return out;
    out.value = 1.0 - sse / sst;
    out.defined = true;
    return out;
}

}  // namespace stanp

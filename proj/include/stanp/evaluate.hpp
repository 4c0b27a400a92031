#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "stanp/footprint.hpp"
#include "stanp/gbq.hpp"
#include "stanp/metrics.hpp"
#include "stanp/model.hpp"
#include "stanp/partition.hpp"
#include "stanp/qrf.hpp"

namespace stanp {

struct HoldoutSplit {
    std::vector<const Footprint*> train;  // non-holdout years, train tiles
    std::vector<const Footprint*> test;   // holdout year, test tiles
    int holdout_year = 0;
};

// Splits by year and tile role. Throws ConfigError when the holdout year is
// absent from the data.
HoldoutSplit temporal_holdout(const std::vector<Footprint>& footprints, const TilePartition& partition,
                              int holdout_year);

// Uncertainty-emitting prediction interface shared by the evaluation loop.
// The context is the test tile's own non-holdout-year footprints; predictors
// that need no context ignore it.
class Predictor {
public:
    virtual ~Predictor() = default;
    virtual std::string name() const = 0;
    virtual std::vector<model::PredictiveGaussian> predict(const std::vector<const Footprint*>& context,
                                                           const std::vector<const Footprint*>& targets) = 0;
};

class AnpPredictor final : public Predictor {
public:
    AnpPredictor(const model::ModelParams& params, std::size_t latent_samples, std::uint64_t seed);
    std::string name() const override { return "ANP"; }
    std::vector<model::PredictiveGaussian> predict(const std::vector<const Footprint*>& context,
                                                   const std::vector<const Footprint*>& targets) override;

private:
    const model::ModelParams& params_;
    std::size_t latent_samples_;
    std::uint64_t seed_;
};

class QrfPredictor final : public Predictor {
public:
    QrfPredictor(const QuantileForest& forest, double sigma_floor);
    std::string name() const override { return "QRF"; }
    std::vector<model::PredictiveGaussian> predict(const std::vector<const Footprint*>& context,
                                                   const std::vector<const Footprint*>& targets) override;
    std::size_t crossing_count() const { return crossings_; }

private:
    const QuantileForest& forest_;
    double sigma_floor_;
    std::size_t crossings_ = 0;
};

class GbqPredictor final : public Predictor {
public:
    // mid may be null; the mean convention then falls back to the midpoint
    GbqPredictor(const BoostedQuantile& lo, const BoostedQuantile* mid, const BoostedQuantile& hi,
                 double sigma_floor);
    std::string name() const override { return "GBQ"; }
    std::vector<model::PredictiveGaussian> predict(const std::vector<const Footprint*>& context,
                                                   const std::vector<const Footprint*>& targets) override;
    std::size_t crossing_count() const { return crossings_; }

private:
    const BoostedQuantile& lo_;
    const BoostedQuantile* mid_;
    const BoostedQuantile& hi_;
    double sigma_floor_;
    std::size_t crossings_ = 0;
};

struct MetricsReport {
    double log_r2 = 0.0;
    double log_rmse = 0.0;
    double linear_rmse_mgha = 0.0;
    double linear_mae_mgha = 0.0;
    double cov1 = 0.0;
    double cov2 = 0.0;
    double z_mean = 0.0;
    double z_std = 0.0;
    std::size_t n = 0;
    bool r2_defined = true;
};

struct PredictionRecord {
    int tile_id = -1;
    double y_norm = 0.0;
    double mu = 0.0;
    double sigma = 0.0;
};

struct EvaluationResult {
    MetricsReport report;
    std::vector<PredictionRecord> records;
    std::size_t skipped_tiles = 0;  // test tiles with no context footprints
};

// Evaluates one predictor over the holdout split: per test tile, context is
// that tile's non-holdout-year footprints; tiles without context are skipped
// and counted. Throws EvaluationEmptyError when nothing is evaluable.
EvaluationResult evaluate_model(Predictor& predictor, const std::vector<Footprint>& footprints,
                                const TilePartition& partition, int holdout_year);

// Per-tile yearly mean AGBD (Mg/ha) over all footprints regardless of role.
std::map<int, std::map<int, double>> tile_yearly_means(const std::vector<Footprint>& footprints);

// Stratification of every tile present in the data against the test year.
std::map<int, DisturbanceRecord> stratify_tiles(const std::vector<Footprint>& footprints, int test_year);

}  // namespace stanp

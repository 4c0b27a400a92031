#include "stanp/evaluate.hpp"

#include <algorithm>
#include <set>

#include "stanp/coords.hpp"
#include "stanp/errors.hpp"
#include "stanp/flat_feature.hpp"

namespace stanp {

HoldoutSplit temporal_holdout(const std::vector<Footprint>& footprints, const TilePartition& partition,
                              int holdout_year) {
    bool year_present = false;
    for (const Footprint& fp : footprints) {
        if (fp.year == holdout_year) {
            year_present = true;
            break;
        }
    }
    if (!year_present) {
        throw ConfigError("holdout year " + std::to_string(holdout_year) + " is absent from the data");
    }

    HoldoutSplit split;
    split.holdout_year = holdout_year;
    for (const Footprint& fp : footprints) {
        const std::size_t tile = static_cast<std::size_t>(fp.tile_id);
        if (tile >= partition.roles.size()) {
            throw ContractViolation("footprint tile " + std::to_string(fp.tile_id) +
                                    " lies outside the partition grid");
        }
        if (fp.year == holdout_year) {
            if (partition.role(tile) == TileRole::Test) split.test.push_back(&fp);
        } else if (partition.role(tile) == TileRole::Train) {
            split.train.push_back(&fp);
        }
    }
    return split;
}

AnpPredictor::AnpPredictor(const model::ModelParams& params, std::size_t latent_samples, std::uint64_t seed)
    : params_(params), latent_samples_(latent_samples), seed_(seed) {}

std::vector<model::PredictiveGaussian> AnpPredictor::predict(const std::vector<const Footprint*>& context,
                                                             const std::vector<const Footprint*>& targets) {
    std::vector<model::Query> queries;
    queries.reserve(targets.size());
    for (const Footprint* fp : targets) queries.push_back({&fp->patch, &fp->coord});
    // one stream per tile keeps results independent of tile visit order
    const std::uint64_t tile_tag =
        targets.empty() ? 0 : static_cast<std::uint64_t>(targets.front()->tile_id) + 1;
    Rng rng = Rng::from_tag(seed_, tile_tag);
    return model::predict(params_, context, queries, latent_samples_, rng);
}

QrfPredictor::QrfPredictor(const QuantileForest& forest, double sigma_floor)
    : forest_(forest), sigma_floor_(sigma_floor) {}

std::vector<model::PredictiveGaussian> QrfPredictor::predict(const std::vector<const Footprint*>&,
                                                             const std::vector<const Footprint*>& targets) {
    std::vector<model::PredictiveGaussian> out;
    out.reserve(targets.size());
    for (const Footprint* fp : targets) {
        const std::vector<double> f = flat_feature(*fp);
        out.push_back(quantiles_to_gaussian(forest_.predict_triple(f.data()), sigma_floor_,
                                            MuConvention::Median, &crossings_));
    }
    return out;
}

GbqPredictor::GbqPredictor(const BoostedQuantile& lo, const BoostedQuantile* mid, const BoostedQuantile& hi,
                           double sigma_floor)
    : lo_(lo), mid_(mid), hi_(hi), sigma_floor_(sigma_floor) {}

std::vector<model::PredictiveGaussian> GbqPredictor::predict(const std::vector<const Footprint*>&,
                                                             const std::vector<const Footprint*>& targets) {
    std::vector<model::PredictiveGaussian> out;
    out.reserve(targets.size());
    for (const Footprint* fp : targets) {
        const std::vector<double> f = flat_feature(*fp);
        QuantileTriple t;
        t.q16 = lo_.predict(f.data());
        t.q84 = hi_.predict(f.data());
        const MuConvention convention = mid_ != nullptr ? MuConvention::Median : MuConvention::Midpoint;
        if (mid_ != nullptr) t.q50 = mid_->predict(f.data());
        out.push_back(quantiles_to_gaussian(t, sigma_floor_, convention, &crossings_));
    }
    return out;
}

EvaluationResult evaluate_model(Predictor& predictor, const std::vector<Footprint>& footprints,
                                const TilePartition& partition, int holdout_year) {
    const HoldoutSplit split = temporal_holdout(footprints, partition, holdout_year);

    std::map<int, std::vector<const Footprint*>> targets_by_tile;
    for (const Footprint* fp : split.test) targets_by_tile[fp->tile_id].push_back(fp);

    std::map<int, std::vector<const Footprint*>> context_by_tile;
    for (const Footprint& fp : footprints) {
        if (fp.year == holdout_year) continue;
        if (targets_by_tile.count(fp.tile_id) != 0) context_by_tile[fp.tile_id].push_back(&fp);
    }

    EvaluationResult result;
    for (const auto& [tile, targets] : targets_by_tile) {
        const auto ctx_it = context_by_tile.find(tile);
        if (ctx_it == context_by_tile.end() || ctx_it->second.empty()) {
            ++result.skipped_tiles;
            continue;
        }
        const std::vector<model::PredictiveGaussian> preds = predictor.predict(ctx_it->second, targets);
        if (preds.size() != targets.size()) {
            throw ContractViolation("predictor returned " + std::to_string(preds.size()) + " outputs for " +
                                    std::to_string(targets.size()) + " targets");
        }
        for (std::size_t i = 0; i < targets.size(); ++i) {
            result.records.push_back({tile, targets[i]->y_norm, preds[i].mu, preds[i].sigma});
        }
    }
    if (result.records.size() < 2) {
        throw EvaluationEmptyError("holdout evaluation produced " + std::to_string(result.records.size()) +
                                   " predictions");
    }

    std::vector<double> y, mu, sigma;
    y.reserve(result.records.size());
    for (const PredictionRecord& r : result.records) {
        y.push_back(r.y_norm);
        mu.push_back(r.mu);
        sigma.push_back(r.sigma);
    }
    const AccuracyMetrics acc = accuracy_metrics(y, mu);
    const ZStats zs = z_stats(y, mu, sigma);
    MetricsReport& rep = result.report;
    rep.log_r2 = acc.log_r2;
    rep.log_rmse = acc.log_rmse;
    rep.linear_rmse_mgha = acc.linear_rmse;
    rep.linear_mae_mgha = acc.linear_mae;
    rep.r2_defined = acc.r2_defined;
    rep.cov1 = coverage(y, mu, sigma, 1.0);
    rep.cov2 = coverage(y, mu, sigma, 2.0);
    rep.z_mean = zs.mean;
    rep.z_std = zs.std;
    rep.n = result.records.size();
    return result;
}

std::map<int, std::map<int, double>> tile_yearly_means(const std::vector<Footprint>& footprints) {
    std::map<int, std::map<int, std::pair<double, std::size_t>>> sums;
    for (const Footprint& fp : footprints) {
        auto& cell = sums[fp.tile_id][fp.year];
        cell.first += norm_to_agbd(fp.y_norm);
        cell.second += 1;
    }
    std::map<int, std::map<int, double>> out;
    for (const auto& [tile, years] : sums) {
        for (const auto& [year, cell] : years) {
            out[tile][year] = cell.first / static_cast<double>(cell.second);
        }
    }
    return out;
}

std::map<int, DisturbanceRecord> stratify_tiles(const std::vector<Footprint>& footprints, int test_year) {
    std::map<int, DisturbanceRecord> out;
    for (const auto& [tile, years] : tile_yearly_means(footprints)) {
        out[tile] = disturbance_delta(years, test_year, tile);
    }
    return out;
}

}  // namespace stanp

#include "stanp/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <utility>

#include "stanp/errors.hpp"
#include "stanp/optimizer.hpp"
#include "stanp/parallel.hpp"
#include "stanp/tape.hpp"

namespace stanp {

void TrainingConfig::validate() const {
    if (!(context_ratio_low > 0.0 && context_ratio_low <= context_ratio_high && context_ratio_high < 1.0)) {
        throw ContractViolation("context ratio range must satisfy 0 < low <= high < 1");
    }
    if (!(learning_rate > 0.0)) throw ContractViolation("learning rate must be positive");
    if (!(beta_max >= 0.0)) throw ContractViolation("beta_max must be non-negative");
    if (episode_batch == 0) throw ContractViolation("episode batch must be at least 1");
    if (latent_samples_train == 0) throw ContractViolation("need at least one posterior sample");
    if (episode_max_footprints < kMinEpisodeFootprints) {
        throw ContractViolation("episode footprint cap below the minimum episode size");
    }
    if (jobs == 0) throw ContractViolation("jobs must be at least 1");
}

double beta_schedule(std::size_t step, const TrainingConfig& config) {
    if (config.anneal_steps == 0) return config.beta_max;
    const double frac = static_cast<double>(step) / static_cast<double>(config.anneal_steps);
    return config.beta_max * std::min(1.0, frac);
}

namespace {

struct EpisodeSpec {
    Episode episode;
    std::vector<std::vector<double>> noise;
};

// One episode's contribution: loss value plus registry-ordered gradients.
struct EpisodeGrads {
    double loss = 0.0;
    std::vector<Tensor> grads;
};

EpisodeGrads episode_backward(const model::ModelParams& params, const EpisodeSpec& spec, double beta) {
    ad::Tape tape;
    model::GraphParams gp = model::register_params(tape, params, true);
    model::ElboNodes nodes =
        model::elbo_loss(tape, gp, spec.episode.context, spec.episode.targets, beta, spec.noise);
    tape.backward(nodes.loss);

    EpisodeGrads out;
    out.loss = ad::first(nodes.loss);
    out.grads.reserve(params.count());
    for (std::size_t i = 0; i < params.count(); ++i) {
        const ad::Value& leaf = gp.leaves[i];
        out.grads.push_back(tape.has_grad(leaf) ? tape.grad(leaf) : Tensor::zeros_like(params.tensor(i)));
    }
    return out;
}

}  // namespace

TrainResult train(model::ModelParams initial, const std::vector<Footprint>& dataset,
                  const TrainingConfig& config, const LogSink& log, const AccessProbe& probe) {
    config.validate();

    // group by tile; ordered map keeps tile order independent of input order
    std::map<int, std::vector<const Footprint*>> by_tile;
    for (const Footprint& fp : dataset) by_tile[fp.tile_id].push_back(&fp);
    std::vector<std::vector<const Footprint*>> tiles;
    for (auto& [tile_id, fps] : by_tile) {
        if (fps.size() >= kMinEpisodeFootprints) tiles.push_back(std::move(fps));
    }
    if (tiles.empty()) throw ConfigError("no tile has enough footprints to train on");

    TrainResult result{std::move(initial), {}};
    result.history.reserve(config.steps);
    AdamOptimizer opt(config.learning_rate);
    Rng master(config.seed);
    const std::size_t latent_width = result.params.config().latent_width;

    std::vector<EpisodeSpec> specs(config.episode_batch);
    std::vector<EpisodeGrads> batch(config.episode_batch);
    for (std::size_t step = 0; step < config.steps; ++step) {
        const double beta = beta_schedule(step, config);

        // sequential phase: every random choice comes from the master stream
        for (std::size_t b = 0; b < config.episode_batch; ++b) {
            const std::size_t t = master.uniform_index(tiles.size());
            const double ratio = master.uniform(config.context_ratio_low, config.context_ratio_high);
            Rng episode_rng = master.derive(b);

            std::vector<const Footprint*> pool = tiles[t];
            if (pool.size() > config.episode_max_footprints) {
                episode_rng.shuffle(pool);
                pool.resize(config.episode_max_footprints);
            }
            specs[b].episode = make_episode(pool, ratio, episode_rng);
            specs[b].noise.assign(config.latent_samples_train, {});
            for (auto& draw : specs[b].noise) draw = episode_rng.normal_vector(latent_width);

            if (probe) {
                for (const Footprint* fp : specs[b].episode.context) probe(*fp);
                for (const Footprint* fp : specs[b].episode.targets) probe(*fp);
            }
        }

        try {
            parallel_for(config.episode_batch, config.jobs,
                         [&](std::size_t b) { batch[b] = episode_backward(result.params, specs[b], beta); });
        } catch (const NumericError& e) {
            throw DivergenceError(std::string("training diverged: ") + e.what(), static_cast<int>(step));
        }

        // ordered reduction keeps results independent of worker scheduling
        double loss = 0.0;
        std::vector<Tensor> grads;
        grads.reserve(result.params.count());
        for (std::size_t i = 0; i < result.params.count(); ++i) {
            grads.push_back(Tensor::zeros_like(result.params.tensor(i)));
        }
        const double inv_batch = 1.0 / static_cast<double>(config.episode_batch);
        for (std::size_t b = 0; b < config.episode_batch; ++b) {
            loss += batch[b].loss * inv_batch;
            for (std::size_t i = 0; i < grads.size(); ++i) {
                Tensor& acc = grads[i];
                const Tensor& g = batch[b].grads[i];
                for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += g[j] * inv_batch;
            }
        }
        if (!std::isfinite(loss)) {
            throw DivergenceError("training loss became non-finite", static_cast<int>(step));
        }

        opt.step(result.params, grads);
        result.history.push_back(loss);

        if (log && config.log_every > 0 && (step % config.log_every == 0 || step + 1 == config.steps)) {
            std::ostringstream line;
            line << "step " << step << " loss " << loss << " beta " << beta;
            log(line.str());
        }
    }
    return result;
}

}  // namespace stanp

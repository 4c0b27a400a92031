#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "stanp/episode.hpp"
#include "stanp/footprint.hpp"
#include "stanp/model.hpp"

namespace stanp {

struct TrainingConfig {
    std::size_t steps = 1000;
    double learning_rate = 3e-4;
    double beta_max = 1.0;
    std::size_t anneal_steps = 200;  // linear ramp length; default 20% of steps
    double context_ratio_low = 0.3;
    double context_ratio_high = 0.7;
    std::size_t episode_batch = 4;
    std::uint64_t seed = 0;
    std::size_t latent_samples_train = 1;
    std::size_t episode_max_footprints = 512;  // larger tiles are subsampled per episode
    std::size_t log_every = 100;
    std::size_t jobs = 1;

    void validate() const;  // throws ContractViolation
};

// beta_max · min(1, step / anneal_steps); anneal_steps = 0 disables the ramp.
double beta_schedule(std::size_t step, const TrainingConfig& config);

struct TrainResult {
    model::ModelParams params;
    std::vector<double> history;  // mean episode loss per step
};

// Called once per footprint that enters an episode, before any math runs.
using AccessProbe = std::function<void(const Footprint&)>;
using LogSink = std::function<void(const std::string&)>;

// Episodic training over tiles with at least 4 footprints. Episode batches
// are drawn sequentially from the master stream, then built on worker
// threads; gradients reduce in episode order, so results are independent of
// jobs. Throws ConfigError when no tile is trainable and DivergenceError
// when a step produces a non-finite loss.
TrainResult train(model::ModelParams initial, const std::vector<Footprint>& dataset,
                  const TrainingConfig& config, const LogSink& log = {}, const AccessProbe& probe = {});

}  // namespace stanp

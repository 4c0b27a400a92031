#pragma once

#include <cstdint>
#include <vector>

#include "stanp/coords.hpp"
#include "stanp/dataset_io.hpp"
#include "stanp/rng.hpp"
#include "stanp/tensor.hpp"

namespace stanp {

// Circular biomass-removal event: points within radius keep retained_fraction
// of their value from event_time onward.
struct DisturbanceEvent {
    double center_lon = 0.0;
    double center_lat = 0.0;
    double radius = 0.0;
    double event_time = 0.0;         // normalized time in [0,1]
    double retained_fraction = 0.0;  // in [0,1)
};

struct WorldConfig {
    Region region;
    std::vector<int> years{2019, 2020, 2021, 2022, 2023};
    std::size_t tiles_x = 5;
    std::size_t tiles_y = 5;
    std::size_t footprints_per_tile_per_year = 400;
    std::size_t embed_dim = 16;
    double length_scale = 0.25;  // bump width as a fraction of region extent
    std::size_t field_bumps = 12;
    double noise_sigma_log = 0.15;  // lognormal observation noise
    double embedding_noise = 0.02;  // white noise added to patch channels
    double along_spacing = 0.0;     // 0 → region width / 150
    double patch_cell_size = 0.0;   // 0 → region width / 3000
    std::vector<DisturbanceEvent> events;
    std::uint64_t seed = 0;

    void validate() const;  // throws ContractViolation
    StudyPeriod period() const;
    std::size_t tile_count() const { return tiles_x * tiles_y; }
    NormalizationFrame frame() const { return NormalizationFrame{region, period()}; }
};

// Row-major tile index of a point; the grid is the evaluation unit.
int tile_of(const WorldConfig& world, double lon, double lat);

// Ground truth in Mg/ha at normalized time t ∈ [0,1]: fixed random
// radial-basis field clipped to [0, cap], scaled down by every event already
// in effect at t. Deterministic given the world seed.
double true_biomass(const WorldConfig& world, double lon, double lat, double t);

// 3×3×D patch of channel responses to local truth sampled at small spatial
// offsets, plus white noise drawn from rng. Channel 0 responds affinely in
// log space; at least one channel saturates above ~60% of the cap.
Tensor synth_embedding(const WorldConfig& world, double lon, double lat, double t, Rng& rng);

struct SampleResult {
    Dataset dataset;
    std::vector<double> true_y_norm;  // noiseless normalized truth per record
    std::vector<int> sparse_tiles;    // tiles with under 4 shots in some year
};

// Stripe-track sampling: per year, randomly oriented tracks are laid across
// the region and walked at along-track spacing until the configured count is
// reached. Observed values carry lognormal noise and the cap.
SampleResult sample_footprints(const WorldConfig& world);

}  // namespace stanp

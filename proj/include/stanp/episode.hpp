#pragma once

#include <vector>

#include "stanp/footprint.hpp"
#include "stanp/rng.hpp"

namespace stanp {

struct Episode {
    std::vector<const Footprint*> context;
    std::vector<const Footprint*> targets;
    int tile_id = 0;
};

constexpr std::size_t kMinEpisodeFootprints = 4;

// Uniformly random disjoint split of one tile's footprints into
// ceil(ratio * n) context points and the rest as targets, clamped so both
// sides stay non-empty. Throws TileTooSparseError below 4 footprints and
// ContractViolation for ratio outside (0,1) or mixed tile ids.
Episode make_episode(const std::vector<const Footprint*>& tile_footprints, double context_ratio, Rng& rng);

}  // namespace stanp

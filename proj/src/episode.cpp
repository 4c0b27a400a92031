#include "stanp/episode.hpp"

#include <cmath>
#include <string>

#include "stanp/errors.hpp"

namespace stanp {

Episode make_episode(const std::vector<const Footprint*>& tile_footprints, double context_ratio, Rng& rng) {
    const std::size_t n = tile_footprints.size();
    if (n < kMinEpisodeFootprints) {
        throw TileTooSparseError("tile has " + std::to_string(n) + " footprints, need at least " +
                                 std::to_string(kMinEpisodeFootprints));
    }
    if (!(context_ratio > 0.0 && context_ratio < 1.0)) {
        throw ContractViolation("context ratio must lie in (0,1)");
    }
    for (const Footprint* fp : tile_footprints) {
        if (fp->tile_id != tile_footprints.front()->tile_id) {
            throw ContractViolation("episode footprints span multiple tiles");
        }
    }

    std::size_t n_context = static_cast<std::size_t>(std::ceil(context_ratio * static_cast<double>(n)));
    if (n_context < 1) n_context = 1;
    if (n_context > n - 1) n_context = n - 1;

    std::vector<const Footprint*> order = tile_footprints;
    rng.shuffle(order);

    Episode ep;
    ep.tile_id = order.front()->tile_id;
    ep.context.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_context));
    ep.targets.assign(order.begin() + static_cast<std::ptrdiff_t>(n_context), order.end());
    return ep;
}

}  // namespace stanp

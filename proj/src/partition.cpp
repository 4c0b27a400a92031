#include "stanp/partition.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "stanp/errors.hpp"
#include "stanp/rng.hpp"

namespace stanp {

const char* role_name(TileRole role) {
    switch (role) {
        case TileRole::Train: return "train";
        case TileRole::Val: return "val";
        case TileRole::Test: return "test";
        case TileRole::BufferExcluded: return "buffer-excluded";
    }
    return "unknown";
}

std::size_t TilePartition::count(TileRole r) const {
    return static_cast<std::size_t>(std::count(roles.begin(), roles.end(), r));
}

std::vector<std::size_t> TilePartition::tiles_with(TileRole r) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < roles.size(); ++i) {
        if (roles[i] == r) out.push_back(i);
    }
    return out;
}

namespace {

// Largest-remainder apportionment of n tiles into 70/15/15. On remainder
// ties the later role (test) wins, so tiny grids keep a test tile.
std::vector<std::size_t> quota_counts(std::size_t n) {
    const double fractions[3] = {0.70, 0.15, 0.15};
    std::vector<std::size_t> counts(3);
    std::vector<double> remainders(3);
    std::size_t assigned = 0;
    for (int r = 0; r < 3; ++r) {
        const double quota = fractions[r] * static_cast<double>(n);
        counts[r] = static_cast<std::size_t>(std::floor(quota));
        remainders[r] = quota - std::floor(quota);
        assigned += counts[r];
    }
    std::vector<int> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (remainders[a] != remainders[b]) return remainders[a] > remainders[b];
        return a > b;
    });
    for (std::size_t left = n - assigned, i = 0; left > 0; --left, ++i) {
        counts[order[i % 3]] += 1;
    }
    return counts;
}

}  // namespace

TilePartition partition_tiles(std::size_t rows, std::size_t cols, std::uint64_t seed,
                              std::size_t buffer_radius) {
    if (rows == 0 || cols == 0 || rows * cols < 3) {
        throw ContractViolation("partition needs at least 3 tiles");
    }
    const std::size_t n = rows * cols;

    TilePartition p;
    p.rows = rows;
    p.cols = cols;
    p.seed = seed;
    p.buffer_radius = buffer_radius;
    p.roles.assign(n, TileRole::Train);

    const std::vector<std::size_t> counts = quota_counts(n);
    std::vector<std::size_t> tiles(n);
    std::iota(tiles.begin(), tiles.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(tiles);

    std::size_t at = counts[0];
    for (std::size_t i = 0; i < counts[1]; ++i) p.roles[tiles[at++]] = TileRole::Val;
    for (std::size_t i = 0; i < counts[2]; ++i) p.roles[tiles[at++]] = TileRole::Test;

    if (buffer_radius > 0) {
        const std::vector<std::size_t> test_tiles = p.tiles_with(TileRole::Test);
        for (std::size_t t = 0; t < n; ++t) {
            if (p.roles[t] != TileRole::Train && p.roles[t] != TileRole::Val) continue;
            const std::ptrdiff_t tr = static_cast<std::ptrdiff_t>(t / cols);
            const std::ptrdiff_t tc = static_cast<std::ptrdiff_t>(t % cols);
            for (std::size_t s : test_tiles) {
                const std::ptrdiff_t sr = static_cast<std::ptrdiff_t>(s / cols);
                const std::ptrdiff_t sc = static_cast<std::ptrdiff_t>(s % cols);
                const std::size_t cheb = static_cast<std::size_t>(
                    std::max(std::abs(tr - sr), std::abs(tc - sc)));
                if (cheb <= buffer_radius) {
                    p.roles[t] = TileRole::BufferExcluded;
                    break;
                }
            }
        }
    }

    if (p.count(TileRole::Train) == 0) {
        throw PartitionInfeasibleError("buffering removed every training tile");
    }
    return p;
}

}  // namespace stanp

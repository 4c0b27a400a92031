#pragma once

#include <cstdint>
#include <vector>

namespace stanp {

enum class TileRole : std::uint8_t { Train = 0, Val = 1, Test = 2, BufferExcluded = 3 };

const char* role_name(TileRole role);

struct TilePartition {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::uint64_t seed = 0;
    std::size_t buffer_radius = 1;
    std::vector<TileRole> roles;  // row-major, rows*cols entries

    TileRole role(std::size_t tile) const { return roles[tile]; }
    std::size_t count(TileRole role) const;
    std::vector<std::size_t> tiles_with(TileRole role) const;
};

// Random 70/15/15 role assignment with largest-remainder rounding, then every
// train or val tile within Chebyshev distance <= buffer_radius of a test tile
// is re-labeled buffer-excluded. Deterministic per seed.
TilePartition partition_tiles(std::size_t rows, std::size_t cols, std::uint64_t seed,
                              std::size_t buffer_radius = 1);

}  // namespace stanp

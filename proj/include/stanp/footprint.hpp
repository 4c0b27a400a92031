#pragma once

#include "stanp/coords.hpp"
#include "stanp/tensor.hpp"

namespace stanp {

// One observation: where/when, the local embedding patch, and the normalized
// log-biomass target.
struct Footprint {
    SpatioTemporalCoord coord;
    Tensor patch;  // shape (3,3,D)
    double y_norm = 0.0;
    int year = 0;
    int tile_id = 0;
};

}  // namespace stanp
